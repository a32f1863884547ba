use klnn::entropy::{Budget, EstimatorConfig};
use klnn::mutual_info::{mi_3kl, mi_3lnn, mi_ksg, mi_lnn_ksg, CoupledMarginals};
use klnn::synth::{
    generate, ground_truth, uniform_sum_mi, Family, Function, Quantity, ScenarioSpec, TruthKind,
    NOISE_HALFWIDTH_ALTERNATE, NOISE_HALFWIDTH_LITERAL,
};
use klnn::stats::Welford;
use quadrature::double_exponential::integrate;

fn spec(family: &str, p: f64, n: usize, seed: u64) -> ScenarioSpec {
    ScenarioSpec::new(family.parse().unwrap(), n, seed).param(p)
}

fn column_stats(s: &klnn::synth::Synthetic, f: impl Fn(&[f64]) -> f64) -> Welford {
    s.cloud.rows().map(f).collect()
}

fn within_sigmas(w: &Welford, expected: f64, sigmas: f64) -> bool {
    (w.mean() - expected).abs() < sigmas * w.stderr()
}

#[test]
fn same_seed_same_sample() {
    for family in ["gauss-corr-2d", "gauss-mixture", "near-functional:sin", "multilinear-uniform:x:4"] {
        let s = spec(family, 0.5, 300, 9);
        assert_eq!(generate(&s).unwrap(), generate(&s).unwrap());
        assert_ne!(generate(&s).unwrap(), generate(&s.with_seed(10)).unwrap());
    }
}

#[test]
fn independent_gaussian_covariance() {
    let n = 20_000;
    let s = generate(&spec("gauss-corr-2d", 0.0, n, 1)).unwrap();
    let tol = 4.0 / (n as f64).sqrt();
    assert!((column_stats(&s, |r| r[0] * r[0]).mean() - 1.0).abs() < tol);
    assert!((column_stats(&s, |r| r[1] * r[1]).mean() - 1.0).abs() < tol);
    assert!(column_stats(&s, |r| r[0] * r[1]).mean().abs() < tol);
}

#[test]
fn correlated_gaussian_sample_correlation() {
    let s = generate(&spec("gauss-corr-2d", 0.9, 100_000, 2)).unwrap();
    let (mx, my) = (column_stats(&s, |r| r[0]).mean(), column_stats(&s, |r| r[1]).mean());
    let sxy = column_stats(&s, |r| (r[0] - mx) * (r[1] - my)).mean();
    let sxx = column_stats(&s, |r| (r[0] - mx).powi(2)).mean();
    let syy = column_stats(&s, |r| (r[1] - my).powi(2)).mean();
    assert!((sxy / (sxx * syy).sqrt() - 0.9).abs() < 0.01);
}

#[test]
fn block_gaussian_moments() {
    let r = 0.6;
    let s = generate(&spec("gauss-block-6d", r, 100_000, 3)).unwrap();
    for i in 0..6 {
        for j in i..6 {
            let expected = if i == j {
                1.0
            } else if j == i + 1 && i % 2 == 0 {
                r
            } else {
                0.0
            };
            let w = column_stats(&s, |row| row[i] * row[j]);
            assert!(within_sigmas(&w, expected, 5.0), "({i},{j}): {}", w.mean());
        }
    }
}

#[test]
fn mixture_components_are_balanced() {
    let n = 100_000;
    let s = generate(&spec("gauss-mixture", 0.9999, n, 4)).unwrap();
    let positive = s.cloud.rows().filter(|r| r[0] * r[1] > 0.0).count() as f64 / n as f64;
    assert!((positive - 0.5).abs() < 4.0 / (n as f64).sqrt());

    let s = generate(&spec("gauss-mixture", 0.7, n, 5)).unwrap();
    assert!(within_sigmas(&column_stats(&s, |r| r[0] * r[1]), 0.0, 5.0));
    // E[X^2 Y^2] = 1 + 2 r^2 in either component
    assert!(within_sigmas(&column_stats(&s, |r| (r[0] * r[1]).powi(2)), 1.0 + 2.0 * 0.49, 5.0));
}

#[test]
fn near_functional_noise_is_bounded() {
    for f in Function::ALL {
        let theta = 1e-6;
        let s = generate(&ScenarioSpec::new(Family::NearFunctional(f), 5000, 6).param(theta)).unwrap();
        for r in s.cloud.rows() {
            let u = r[1] - f.eval(r[0]);
            assert!((-1e-15..=theta + 1e-15).contains(&u), "{f}: {u}");
        }
    }
}

#[test]
fn near_functional_moments() {
    let theta = 0.3;
    let s = generate(&spec("near-functional:x2", theta, 100_000, 7)).unwrap();
    assert!(within_sigmas(&column_stats(&s, |r| r[0]), 0.5, 5.0));
    assert!(within_sigmas(&column_stats(&s, |r| r[1]), 1.0 / 3.0 + theta / 2.0, 5.0));
    let s = generate(&spec("multilinear-uniform:x:4", 2.0, 100_000, 8)).unwrap();
    let w = column_stats(&s, |r| r[4]);
    assert!(within_sigmas(&w, 2.0, 5.0));
    assert!(within_sigmas(&column_stats(&s, |r| (r[4] - 2.0).powi(2)), 4.0 / 12.0 + 4.0 / 3.0, 5.0));
}

#[test]
fn gaussian_truths() {
    let h = ground_truth(&spec("gauss-corr-2d", 0.0, 10, 0), Quantity::Entropy).unwrap();
    assert_eq!(h.kind, TruthKind::Exact);
    assert!((h.value - 2.83788).abs() < 1e-5);
    let h = ground_truth(&spec("gauss-block-6d", 0.0, 10, 0), Quantity::Entropy).unwrap();
    assert!((h.value - 8.51363).abs() < 1e-5);
    let mi = ground_truth(&spec("gauss-corr-2d", 0.9, 10, 0), Quantity::MutualInformation).unwrap();
    assert!((mi.value - 0.83037).abs() < 1e-5);

    let r: f64 = 0.9;
    let det = 1.0 - r * r;
    let phi = |x: f64| (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let joint = |x: f64, y: f64| {
        (-(x * x - 2.0 * r * x * y + y * y) / (2.0 * det)).exp() / (2.0 * std::f64::consts::PI * det.sqrt())
    };
    let quad = integrate(
        |x| {
            integrate(
                |y| {
                    let p = joint(x, y);
                    if p > 0.0 {
                        p * (p / (phi(x) * phi(y))).ln()
                    } else {
                        0.0
                    }
                },
                -12.0,
                12.0,
                1e-12,
            )
            .integral
        },
        -12.0,
        12.0,
        1e-10,
    );
    assert!((quad.integral - mi.value).abs() < 1e-7, "{} vs {}", quad.integral, mi.value);

    let bound = ground_truth(&spec("gauss-mixture", 0.5, 10, 0), Quantity::Entropy).unwrap();
    assert_eq!(bound.kind, TruthKind::UpperBound);
    assert!(!bound.is_point_value());
}

#[test]
fn additive_noise_truths() {
    let exact = ground_truth(&spec("uniform-additive", 0.01, 10, 0), Quantity::MutualInformation).unwrap();
    assert!((exact.value - (0.005 - 0.01f64.ln())).abs() < 1e-12);
    assert!((exact.value - 4.610).abs() < 1e-3);
    for theta in [0.01, 0.5, 3.0] {
        let numeric = ground_truth(&spec("near-functional:x", theta, 10, 0), Quantity::MutualInformation).unwrap();
        assert_eq!(numeric.kind, TruthKind::Numeric);
        assert!(numeric.error_estimate.unwrap() < 1e-8);
        assert!((numeric.value - uniform_sum_mi(theta)).abs() < 1e-9, "theta {theta}");
    }
    let hw = 0.2;
    let ml = ground_truth(&spec("multilinear-uniform:x:1", hw, 10, 0), Quantity::MutualInformation).unwrap();
    assert!((ml.value - uniform_sum_mi(2.0 * hw)).abs() < 1e-9);
}

/// `-(1/w) * sum G log G dy` with `G` counted on a uniform grid of `X`.
fn grid_mi(f: Function, w: f64) -> f64 {
    let nx = 400_000;
    let mut values: Vec<f64> = (0..nx).map(|i| f.eval((i as f64 + 0.5) / nx as f64)).collect();
    values.sort_by(f64::total_cmp);
    let (lo, hi) = (values[0], values[nx - 1] + w);
    let ny = 20_000;
    let dy = (hi - lo) / ny as f64;
    let count_le = |t: f64| values.partition_point(|&v| v <= t) as f64 / nx as f64;
    let mut acc = 0.0;
    for j in 0..ny {
        let y = lo + (j as f64 + 0.5) * dy;
        let g = count_le(y) - count_le(y - w);
        if g > 0.0 {
            acc -= g * g.ln() * dy;
        }
    }
    acc / w
}

#[test]
fn near_functional_truth_matches_grid_oracle() {
    for f in Function::ALL {
        for theta in [0.05, 0.5] {
            let t = ground_truth(&ScenarioSpec::new(Family::NearFunctional(f), 10, 0).param(theta), Quantity::MutualInformation)
                .unwrap();
            let oracle = grid_mi(f, theta);
            assert!((t.value - oracle).abs() < 2e-3, "{f} theta {theta}: {} vs {oracle}", t.value);
        }
    }
}

#[test]
fn multilinear_truth_approaches_sum_entropy() {
    // for vanishing noise I = h(S) - log(2 w), with S the sum of four uniforms
    let density = |s: f64| {
        let mut acc = 0.0;
        let mut binom = 1.0;
        for k in 0..=4usize {
            if k > 0 {
                binom *= (5 - k) as f64 / k as f64;
            }
            if (k as f64) < s {
                acc += if k % 2 == 0 { 1.0 } else { -1.0 } * binom * (s - k as f64).powi(3);
            }
        }
        acc / 6.0
    };
    let h: f64 = (0..4)
        .map(|k| {
            integrate(
                |s| {
                    let p = density(s);
                    if p > 0.0 {
                        -p * p.ln()
                    } else {
                        0.0
                    }
                },
                k as f64,
                k as f64 + 1.0,
                1e-13,
            )
            .integral
        })
        .sum();
    let w = NOISE_HALFWIDTH_ALTERNATE;
    let t = ground_truth(&spec("multilinear-uniform:x:4", w, 10, 0), Quantity::MutualInformation).unwrap();
    assert!((t.value - (h - (2.0 * w).ln())).abs() < 1e-3, "{} vs {}", t.value, h - (2.0 * w).ln());

    let literal = ground_truth(&spec("multilinear-uniform:x:4", NOISE_HALFWIDTH_LITERAL, 10, 0), Quantity::MutualInformation)
        .unwrap();
    assert!(literal.value > 0.0 && literal.value < 1e-3);
    let single = ground_truth(&spec("multilinear-uniform:x:1", NOISE_HALFWIDTH_LITERAL, 10, 0), Quantity::MutualInformation)
        .unwrap();
    assert!((single.value - 1.0 / (4.0 * NOISE_HALFWIDTH_LITERAL)).abs() < 1e-12);
}

#[test]
fn unsupported_truths_and_bad_params() {
    assert!(ground_truth(&spec("gauss-mixture", 0.5, 10, 0), Quantity::MutualInformation).is_err());
    assert!(ground_truth(&spec("multilinear-uniform:x2:4", 0.5, 10, 0), Quantity::MutualInformation).is_err());
    assert!(generate(&spec("gauss-corr-2d", 1.0, 10, 0)).is_err());
    assert!(generate(&spec("near-functional:x", 0.0, 10, 0)).is_err());
    assert!(generate(&spec("gauss-corr-2d", 0.5, 1, 0)).is_err());
    assert!(generate(&ScenarioSpec::new(Family::GaussCorr2d, 10, 0)).is_err());
    let mut wrong = ScenarioSpec::new(Family::GaussCorr2d, 10, 0).param(0.5);
    wrong.theta = Some(0.1);
    assert!(generate(&wrong).is_err());
    assert!(generate(&ScenarioSpec::new(Family::UniformAdditive, 10, 0)).is_ok());
}

#[test]
fn spec_round_trips_through_json() {
    let s = spec("near-functional:cos", 0.25, 100, 3);
    let text = serde_json::to_string(&s).unwrap();
    assert_eq!(serde_json::from_str::<ScenarioSpec>(&text).unwrap(), s);
    assert!(text.contains("\"near-functional:cos\""));
    let meta = spec("gauss-mixture", 0.5, 10, 0).metadata();
    assert!(meta.contains(&("mixture_weights", "0.5,0.5".to_string())));
}

#[test]
fn additive_scenario_favors_local_likelihood_estimators() {
    let s = spec("uniform-additive", 0.01, 500, 21);
    let truth = ground_truth(&s, Quantity::MutualInformation).unwrap().value;
    let js = generate(&s).unwrap().joint_sample().unwrap();
    let cfg = EstimatorConfig::new(5).budget(Budget::Auto { multiplier: 7.0 });
    let baseline = (mi_ksg(&js, 5).unwrap().value - truth)
        .abs()
        .min((mi_3kl(&js, 5).unwrap().value - truth).abs());
    for (name, v) in [
        ("lnn-ksg", mi_lnn_ksg(&js, &cfg, &CoupledMarginals::default()).unwrap().value),
        ("3lnn", mi_3lnn(&js, &cfg).unwrap().value),
    ] {
        let err = (v - truth).abs();
        assert!(err < 0.5 && err < baseline, "{name}: {v} vs {truth}, baseline error {baseline}");
    }
}
