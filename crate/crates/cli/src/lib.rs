//! Command-line front end for the `klnn` estimators.
//!
//! Exit codes: 0 on success, 1 for usage errors, 2 for data or estimation
//! errors.

pub mod bench;
pub mod estimators;
pub mod io;

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use klnn::bias::{bias_constant, BiasRequest, BiasTable, ExponentForm, DEFAULT_CLAMP};
use klnn::entropy::{BiasSource, Budget, KdeBandwidth, KdeRule};
use klnn::synth::{generate, Family, ScenarioSpec, NOISE_HALFWIDTH_ALTERNATE, NOISE_HALFWIDTH_LITERAL};

use crate::bench::{format_rows, run_bench, summary_path, BenchConfig, Format};
use crate::estimators::{Estimator, Report, Settings};

/// Environment variable naming a default bias table.
pub const BIAS_TABLE_ENV: &str = "KLNN_BIAS_TABLE";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
        }
    }
}

impl From<klnn::Error> for CliError {
    fn from(e: klnn::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(name = "klnn", version, about = "k-NN local-likelihood entropy and mutual information estimators")]
struct Cli {
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a k-LNN bias constant and store it in a JSON bias table.
    Bias(BiasArgs),
    /// Estimate the differential entropy of a CSV sample.
    Entropy(EntropyArgs),
    /// Estimate the mutual information between two column blocks of a CSV sample.
    Mi(MiArgs),
    /// Write a synthetic sample as CSV.
    Synth(SynthArgs),
    /// Run a repeated-trial experiment described by a TOML file.
    Bench(BenchArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FormArg {
    #[value(alias = "appendix-scaled")]
    Appendix,
    #[value(alias = "main-text")]
    Maintext,
}

impl From<FormArg> for ExponentForm {
    fn from(f: FormArg) -> Self {
        match f {
            FormArg::Appendix => ExponentForm::AppendixScaled,
            FormArg::Maintext => ExponentForm::MainText,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OutputFormat {
    Text,
    Json,
}

#[derive(Debug, Args)]
struct BiasArgs {
    #[arg(long)]
    k: usize,
    #[arg(long)]
    d: usize,
    /// Truncation of the neighbor series.
    #[arg(long)]
    m: usize,
    #[arg(long)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Table to write; an existing table gains or replaces the entry.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "appendix")]
    form: FormArg,
    #[arg(long, default_value_t = DEFAULT_CLAMP)]
    clamp: f64,
}

#[derive(Debug, Args)]
struct Common {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = 5)]
    k: usize,
    /// Fixed neighbor budget (default: ceil(m-multiplier * ln n)).
    #[arg(long)]
    m: Option<usize>,
    #[arg(long, default_value_t = 1.0)]
    m_multiplier: f64,
    /// Bias table (default: $KLNN_BIAS_TABLE, else simulate the constant).
    #[arg(long)]
    bias_table: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "appendix")]
    form: FormArg,
    /// Seed of the bias simulation.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 100_000)]
    bias_samples: usize,
    #[arg(long, value_enum, default_value = "text")]
    format: OutputFormat,
}

#[derive(Debug, Args)]
struct EntropyArgs {
    #[arg(long, value_parser = ["klnn", "kl", "kde"])]
    estimator: String,
    /// Fixed KDE bandwidth.
    #[arg(long, conflicts_with = "h_rule")]
    h: Option<f64>,
    /// KDE bandwidth rule.
    #[arg(long, value_parser = ["rot", "pow-d4", "pow-d2"])]
    h_rule: Option<String>,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct MiArgs {
    #[arg(long, value_parser = ["3kl", "ksg", "3lnn", "lnn-ksg"])]
    estimator: String,
    /// Number of leading columns forming X.
    #[arg(long)]
    dims_x: usize,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// gauss-corr-2d, gauss-block-6d, gauss-mixture, near-functional:<x|x2|x3|exp2|sin|cos>,
    /// uniform-additive or multilinear-uniform:<x|x2>:<dims>
    #[arg(long)]
    family: String,
    #[arg(long)]
    n: usize,
    #[arg(long, conflicts_with_all = ["theta", "noise_halfwidth"])]
    r: Option<f64>,
    #[arg(long, conflicts_with = "noise_halfwidth")]
    theta: Option<f64>,
    /// A number, `literal` (3^8/2) or `alternate` (3^-8/2).
    #[arg(long)]
    noise_halfwidth: Option<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct BenchArgs {
    #[arg(long)]
    config: PathBuf,
    /// Result file (overrides the config's `out`).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long, value_enum, default_value = "csv")]
    format: BenchFormat,
    /// Fill the runtime_ms column. Timed output is not reproducible.
    #[arg(long)]
    timing: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum BenchFormat {
    Csv,
    Json,
}

/// Runs the command line `argv` (program name first) and returns the exit code.
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let stdout = std::io::stdout();
    let result = with_workers(cli.workers, || run(cli.command, &mut stdout.lock()));
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn with_workers<F>(workers: Option<usize>, f: F) -> Result<(), CliError>
where
    F: FnOnce() -> Result<(), CliError> + Send,
{
    match workers {
        None => f(),
        Some(0) => Err(CliError::Usage("--workers must be at least 1".into())),
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build()
            .map_err(|e| CliError::Data(e.to_string()))?
            .install(f),
    }
}

fn run(command: Command, out: &mut dyn Write) -> Result<(), CliError> {
    match command {
        Command::Bias(a) => cmd_bias(a, out),
        Command::Entropy(a) => cmd_entropy(a, out),
        Command::Mi(a) => cmd_mi(a, out),
        Command::Synth(a) => cmd_synth(a, out),
        Command::Bench(a) => cmd_bench(a, out),
    }
}

fn write_out(out: &mut dyn Write, text: &str) -> Result<(), CliError> {
    out.write_all(text.as_bytes()).map_err(|e| CliError::Data(e.to_string()))
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

/// Explicit path, else `$KLNN_BIAS_TABLE`.
pub(crate) fn table_path(explicit: Option<PathBuf>) -> Option<PathBuf> {
    explicit.or_else(|| std::env::var_os(BIAS_TABLE_ENV).filter(|v| !v.is_empty()).map(PathBuf::from))
}

pub(crate) fn load_table(path: &Path, form: ExponentForm) -> Result<BiasSource, CliError> {
    let table = BiasTable::load(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    Ok(BiasSource::Table { table, form })
}

fn cmd_bias(a: BiasArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let req = BiasRequest::new(a.k, a.d, a.m, a.samples, a.seed)
        .form(a.form.into())
        .clamp(a.clamp);
    let estimate = bias_constant(&req)?;
    let mut table = if a.out.exists() {
        BiasTable::load(&a.out).map_err(|e| CliError::Data(format!("{}: {e}", a.out.display())))?
    } else {
        BiasTable::default()
    };
    table.upsert(estimate.clone());
    table.save(&a.out)?;
    write_out(
        out,
        &format!(
            "k={} d={} m={} samples={} form={} mean={:.6} stderr={:.6}\n",
            estimate.k, estimate.d, estimate.m, estimate.samples, estimate.exponent_form, estimate.mean, estimate.stderr
        ),
    )
}

fn settings(c: &Common, kde: KdeBandwidth) -> Result<Settings, CliError> {
    let form: ExponentForm = c.form.into();
    let bias = match table_path(c.bias_table.clone()) {
        Some(path) => load_table(&path, form)?,
        None => BiasSource::Simulate {
            samples: c.bias_samples,
            seed: c.seed,
            form,
        },
    };
    let budget = match c.m {
        Some(m) => Budget::Fixed(m),
        None => Budget::Auto {
            multiplier: c.m_multiplier,
        },
    };
    Ok(Settings {
        k: c.k,
        budget,
        bias,
        kde,
    })
}

fn report(out: &mut dyn Write, r: &Report, format: OutputFormat) -> Result<(), CliError> {
    match format {
        OutputFormat::Text => write_out(out, &format!("{:.6}\n", r.value())),
        OutputFormat::Json => {
            let text = serde_json::to_string_pretty(r).map_err(|e| CliError::Data(e.to_string()))?;
            write_out(out, &(text + "\n"))
        }
    }
}

fn cmd_entropy(a: EntropyArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let est: Estimator = a.estimator.parse().map_err(CliError::Usage)?;
    if est != Estimator::Kde && (a.h.is_some() || a.h_rule.is_some()) {
        return Err(CliError::Usage("--h and --h-rule apply to the kde estimator only".into()));
    }
    let kde = match (a.h, &a.h_rule) {
        (Some(h), _) => KdeBandwidth::Fixed(h),
        (None, Some(rule)) => KdeBandwidth::Rule(rule.parse::<KdeRule>()?),
        (None, None) => KdeBandwidth::Rule(KdeRule::Rot),
    };
    let s = settings(&a.common, kde)?;
    let cloud = io::read_cloud(&a.common.input)?;
    let r = est.estimate(&cloud, 0, &s)?;
    report(out, &r, a.common.format)
}

fn cmd_mi(a: MiArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let est: Estimator = a.estimator.parse().map_err(CliError::Usage)?;
    let s = settings(&a.common, KdeBandwidth::Rule(KdeRule::Rot))?;
    let cloud = io::read_cloud(&a.common.input)?;
    if a.dims_x == 0 || a.dims_x >= cloud.d() {
        return Err(CliError::Usage(format!(
            "--dims-x {} must be between 1 and {} for a {}-column input",
            a.dims_x,
            cloud.d().saturating_sub(1),
            cloud.d()
        )));
    }
    let r = est.estimate(&cloud, a.dims_x, &s)?;
    report(out, &r, a.common.format)
}

fn parse_halfwidth(s: &str) -> Result<f64, CliError> {
    match s {
        "literal" => Ok(NOISE_HALFWIDTH_LITERAL),
        "alternate" => Ok(NOISE_HALFWIDTH_ALTERNATE),
        other => other
            .parse()
            .map_err(|_| CliError::Usage(format!("--noise-halfwidth '{other}' is not a number, literal or alternate"))),
    }
}

fn cmd_synth(a: SynthArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let family: Family = a.family.parse().map_err(|e: klnn::Error| CliError::Usage(e.to_string()))?;
    let mut spec = ScenarioSpec::new(family, a.n, a.seed);
    spec.r = a.r;
    spec.theta = a.theta;
    spec.noise_halfwidth = a.noise_halfwidth.as_deref().map(parse_halfwidth).transpose()?;
    spec.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let sample = generate(&spec)?;
    io::write_cloud(&a.out, &sample.cloud, &io::xy_header(sample.cloud.d(), sample.dims_x))?;
    let meta: Vec<String> = spec.metadata().into_iter().map(|(k, v)| format!("{k}={v}")).collect();
    write_out(out, &format!("wrote {} samples ({})\n", sample.cloud.n(), meta.join(" ")))
}

fn cmd_bench(a: BenchArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let mut cfg = BenchConfig::load(&a.config)?;
    if let Some(t) = a.trials {
        cfg.trials = t;
    }
    if let Some(path) = a.out {
        cfg.out = Some(path);
    }
    let path = cfg
        .out
        .clone()
        .ok_or_else(|| CliError::Usage("no output path (--out or `out` in the config)".into()))?;
    let format = match a.format {
        BenchFormat::Csv => Format::Csv,
        BenchFormat::Json => Format::Json,
    };
    let result = run_bench(&cfg, a.timing)?;
    write_file(&path, &format_rows(&result.rows, format)?)?;
    let summary = serde_json::to_string_pretty(&result.summary).map_err(|e| CliError::Data(e.to_string()))?;
    write_file(&summary_path(&path), &(summary + "\n"))?;
    write_out(
        out,
        &format!(
            "{} rows ({} trial rows, {} errors) -> {}\n",
            result.summary.rows,
            result.summary.trial_rows,
            result.summary.errors,
            path.display()
        ),
    )?;
    if result.summary.errors > 0 {
        eprintln!("warning: {} trials failed; see the error column", result.summary.errors);
    }
    Ok(())
}
