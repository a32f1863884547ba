fn main() {
    std::process::exit(klnn_cli::cli_main(std::env::args_os()));
}
