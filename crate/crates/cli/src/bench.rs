//! Repeated-trial experiments over a synthetic scenario.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use klnn::bias::ExponentForm;
use klnn::entropy::{BiasSource, Budget, KdeBandwidth, KdeRule};
use klnn::rng::derive_seed;
use klnn::synth::{generate, ground_truth, Family, ScenarioSpec};
use klnn::stats::Welford;

use crate::estimators::{Estimator, Settings};
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Deserialize, Serialize)]
#[serde(untagged)]
enum Number {
    Int(i64),
    Float(f64),
}

impl Number {
    fn value(self) -> f64 {
        match self {
            Number::Int(i) => i as f64,
            Number::Float(f) => f,
        }
    }
}

fn default_k() -> usize {
    5
}

fn default_multiplier() -> f64 {
    7.0
}

fn default_trials() -> usize {
    100
}

fn default_bias_samples() -> usize {
    100_000
}

/// Flat TOML experiment description.
#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct BenchConfig {
    pub scenario: Family,
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_halfwidth: Option<f64>,
    pub estimators: Vec<String>,
    #[serde(default = "default_k")]
    pub k: usize,
    /// Fixed neighbor budget; otherwise `ceil(m_multiplier * ln n)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    #[serde(default = "default_multiplier")]
    pub m_multiplier: f64,
    /// `r`, `theta`, `noise-halfwidth` or `n`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep_variable: Option<String>,
    #[serde(default)]
    sweep_values: Vec<Number>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default = "default_bias_samples")]
    pub bias_samples: usize,
    #[serde(default)]
    pub bias_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bias_table: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kde_rule: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub form: Option<String>,
    #[serde(default, skip_serializing)]
    pub out: Option<PathBuf>,
}

impl BenchConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Usage(format!("bench config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn sweep_values(&self) -> Vec<f64> {
        self.sweep_values.iter().map(|v| v.value()).collect()
    }

    pub fn set_sweep(&mut self, variable: &str, values: &[f64]) {
        self.sweep_variable = Some(variable.to_string());
        self.sweep_values = values.iter().map(|&v| Number::Float(v)).collect();
    }

    fn base_spec(&self) -> ScenarioSpec {
        let mut spec = ScenarioSpec::new(self.scenario, self.n, self.base_seed);
        spec.r = self.r;
        spec.theta = self.theta;
        spec.noise_halfwidth = self.noise_halfwidth;
        spec
    }

    /// Scenario for one sweep point, with the sweep value it reports.
    fn point(&self, value: Option<f64>) -> Result<(ScenarioSpec, f64), CliError> {
        let mut spec = self.base_spec();
        let Some(v) = value else {
            let p = spec.resolved_param().map_err(|e| CliError::Usage(e.to_string()))?;
            return Ok((spec, p));
        };
        match self.sweep_variable.as_deref() {
            Some("n") => {
                if v.fract() != 0.0 || v < 2.0 {
                    return Err(CliError::Usage(format!("sweep value n = {v} is not an integer >= 2")));
                }
                spec.n = v as usize;
            }
            Some(name) if name == self.scenario.param_name() => spec = spec.param(v),
            Some(name) => {
                return Err(CliError::Usage(format!(
                    "cannot sweep '{name}' for {}; use n or {}",
                    self.scenario,
                    self.scenario.param_name()
                )))
            }
            None => return Err(CliError::Usage("sweep_values given without sweep_variable".into())),
        }
        spec.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok((spec, v))
    }

    fn settings(&self) -> Result<Settings, CliError> {
        let form = match &self.form {
            Some(f) => f.parse::<ExponentForm>().map_err(|e| CliError::Usage(e.to_string()))?,
            None => ExponentForm::default(),
        };
        let kde = match &self.kde_rule {
            Some(rule) => rule.parse::<KdeRule>().map_err(|e| CliError::Usage(e.to_string()))?,
            None => KdeRule::Rot,
        };
        let bias = match crate::table_path(self.bias_table.clone()) {
            Some(path) => crate::load_table(&path, form)?,
            None => BiasSource::Simulate {
                samples: self.bias_samples,
                seed: self.bias_seed,
                form,
            },
        };
        let budget = match self.m {
            Some(m) => Budget::Fixed(m),
            None => Budget::Auto {
                multiplier: self.m_multiplier,
            },
        };
        Ok(Settings {
            k: self.k,
            budget,
            bias,
            kde: KdeBandwidth::Rule(kde),
        })
    }
}

/// One line of the result file. Aggregate lines carry `mean`, `mse` or
/// `stderr` in the trial column and the aggregate in `estimate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub scenario: String,
    pub estimator: String,
    pub sweep_value: f64,
    pub trial: String,
    pub estimate: Option<f64>,
    pub truth: Option<f64>,
    pub squared_error: Option<f64>,
    pub runtime_ms: Option<f64>,
    pub seed: Option<u64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchSummary {
    pub rows: usize,
    pub trial_rows: usize,
    pub errors: usize,
    pub metadata: BTreeMap<String, String>,
    pub config: BenchConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchOutput {
    pub rows: Vec<ResultRow>,
    pub summary: BenchSummary,
}

struct Outcome {
    estimate: Result<f64, klnn::Error>,
    runtime_ms: f64,
}

/// Seed of the data set used by every estimator at `(sweep point, trial)`.
pub fn trial_seed(base_seed: u64, point: usize, trial: usize) -> u64 {
    derive_seed(derive_seed(base_seed, point as u64), trial as u64)
}

pub fn run_bench(cfg: &BenchConfig, timing: bool) -> Result<BenchOutput, CliError> {
    if cfg.trials == 0 {
        return Err(CliError::Usage("trials must be at least 1".into()));
    }
    if cfg.estimators.is_empty() {
        return Err(CliError::Usage("no estimators listed".into()));
    }
    let estimators: Vec<Estimator> = cfg
        .estimators
        .iter()
        .map(|s| s.parse().map_err(CliError::Usage))
        .collect::<Result<_, _>>()?;
    let settings = cfg.settings()?;
    let values = cfg.sweep_values();
    let points: Vec<(ScenarioSpec, f64)> = if values.is_empty() {
        vec![cfg.point(None)?]
    } else {
        values.iter().map(|&v| cfg.point(Some(v))).collect::<Result<_, _>>()?
    };

    let jobs: Vec<(usize, usize)> = (0..points.len())
        .flat_map(|p| (0..cfg.trials).map(move |t| (p, t)))
        .collect();
    let outcomes: Vec<Vec<Outcome>> = jobs
        .par_iter()
        .map(|&(p, t)| {
            let spec = points[p].0.with_seed(trial_seed(cfg.base_seed, p, t));
            let sample = generate(&spec);
            estimators
                .iter()
                .map(|est| {
                    let start = Instant::now();
                    let estimate = sample
                        .as_ref()
                        .map_err(Clone::clone)
                        .and_then(|s| est.estimate(&s.cloud, s.dims_x, &settings).map(|r| r.value()));
                    Outcome {
                        estimate,
                        runtime_ms: start.elapsed().as_secs_f64() * 1e3,
                    }
                })
                .collect()
        })
        .collect();

    let mut rows = Vec::new();
    let mut errors = 0;
    let scenario = cfg.scenario.to_string();
    for (e, est) in estimators.iter().enumerate() {
        for (p, (spec, sweep_value)) in points.iter().enumerate() {
            let truth = ground_truth(spec, est.quantity()).ok();
            let point_truth = truth.filter(|t| t.is_point_value()).map(|t| t.value);
            let mut estimates = Welford::new();
            let mut squared = Welford::new();
            for t in 0..cfg.trials {
                let outcome = &outcomes[p * cfg.trials + t][e];
                let mut row = ResultRow {
                    scenario: scenario.clone(),
                    estimator: est.name().to_string(),
                    sweep_value: *sweep_value,
                    trial: t.to_string(),
                    estimate: None,
                    truth: truth.map(|t| t.value),
                    squared_error: None,
                    runtime_ms: timing.then_some(outcome.runtime_ms),
                    seed: Some(trial_seed(cfg.base_seed, p, t)),
                    error: None,
                };
                match &outcome.estimate {
                    Ok(v) => {
                        row.estimate = Some(*v);
                        estimates.push(*v);
                        if let Some(truth) = point_truth {
                            let se = (v - truth).powi(2);
                            row.squared_error = Some(se);
                            squared.push(se);
                        }
                    }
                    Err(err) => {
                        errors += 1;
                        row.error = Some(err.code().to_string());
                    }
                }
                rows.push(row);
            }
            let aggregate = |label: &str, value: Option<f64>| ResultRow {
                scenario: scenario.clone(),
                estimator: est.name().to_string(),
                sweep_value: *sweep_value,
                trial: label.to_string(),
                estimate: value,
                truth: truth.map(|t| t.value),
                squared_error: None,
                runtime_ms: None,
                seed: None,
                error: None,
            };
            let has = estimates.count() > 0;
            rows.push(aggregate("mean", has.then(|| estimates.mean())));
            rows.push(aggregate("mse", (squared.count() > 0).then(|| squared.mean())));
            rows.push(aggregate("stderr", (estimates.count() > 1).then(|| estimates.stderr())));
        }
    }
    let metadata: BTreeMap<String, String> = points[0]
        .0
        .metadata()
        .into_iter()
        .filter(|(k, _)| *k != cfg.scenario.param_name())
        .map(|(k, v)| (k.to_string(), v))
        .collect();
    Ok(BenchOutput {
        summary: BenchSummary {
            rows: rows.len(),
            trial_rows: estimators.len() * points.len() * cfg.trials,
            errors,
            metadata,
            config: cfg.clone(),
        },
        rows,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

pub fn format_rows(rows: &[ResultRow], format: Format) -> Result<String, CliError> {
    match format {
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            for row in rows {
                w.serialize(row).map_err(|e| CliError::Data(e.to_string()))?;
            }
            let bytes = w.into_inner().map_err(|e| CliError::Data(e.to_string()))?;
            Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
        }
        Format::Json => serde_json::to_string_pretty(rows)
            .map(|s| s + "\n")
            .map_err(|e| CliError::Data(e.to_string())),
    }
}

pub fn parse_rows(text: &str) -> Result<Vec<ResultRow>, CliError> {
    csv::Reader::from_reader(text.as_bytes())
        .deserialize()
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::Data(e.to_string()))
}

/// Path of the summary written next to `out`.
pub fn summary_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().map(|s| s.to_os_string()).unwrap_or_default();
    name.push(".summary.json");
    out.with_file_name(name)
}
