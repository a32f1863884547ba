//! Resubstitution entropy estimators.
//!
//! All estimators have the form `-(1/n) sum_i log f(X_i)` minus a bias
//! constant, where `f` is a density estimate at each sample that leaves the
//! sample itself out. Values are in nats.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Mutex, OnceLock};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::bias::{bias_constant, kl_bias_constant, BiasEstimate, BiasRequest, BiasTable, ExponentForm, DEFAULT_CLAMP};
use crate::density::{local_moments, log_llde, log_llde_p2_with_policy, Contributors, Degree, PolicyOutcome, SigmaPolicy, KERNEL_SUPPORT};
use crate::error::{Error, Result};
use crate::exec::{map_range, try_map_range};
use crate::neighbors::{NeighborIndex, PointCloud};
use crate::rng::replica_rng;
use crate::special::{digamma, unit_ball_volume};
use crate::stats::Welford;

/// Number of nearest neighbors entering the local moments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Budget {
    /// `ceil(multiplier * ln n)`
    Auto { multiplier: f64 },
    Fixed(usize),
}

impl Default for Budget {
    fn default() -> Self {
        Budget::Auto { multiplier: 1.0 }
    }
}

impl Budget {
    /// Effective budget for `n` samples and `k` neighbors, and whether the
    /// request had to be cut to `n - 1`.
    ///
    /// Auto budgets are raised to `k + 1` so the moments always reach past
    /// the bandwidth neighbor.
    pub fn resolve(self, n: usize, k: usize) -> Result<(usize, bool)> {
        let wanted = match self {
            Budget::Auto { multiplier } => {
                if !(multiplier > 0.0) || !multiplier.is_finite() {
                    return Err(Error::InvalidArgument(format!(
                        "budget multiplier must be positive, got {multiplier}"
                    )));
                }
                ((multiplier * (n as f64).ln()).ceil() as usize).max(k + 1)
            }
            Budget::Fixed(m) => {
                if m < k {
                    return Err(Error::InvalidArgument(format!("budget m = {m} is smaller than k = {k}")));
                }
                m
            }
        };
        let cap = n.saturating_sub(1);
        Ok((wanted.min(cap), wanted > cap))
    }
}

/// Where the k-LNN bias constant comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum BiasSource {
    None,
    Constant(f64),
    Table { table: BiasTable, form: ExponentForm },
    /// Simulate the constant for the effective `(k, d, m)`; results are
    /// cached per process.
    Simulate { samples: usize, seed: u64, form: ExponentForm },
}

impl Default for BiasSource {
    fn default() -> Self {
        BiasSource::Simulate {
            samples: 100_000,
            seed: 0,
            form: ExponentForm::AppendixScaled,
        }
    }
}

/// Which samples enter the moments of the coupled estimator.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Support {
    /// The `m` nearest samples.
    #[default]
    Nearest,
    /// Every sample where the kernel weight is above `1e-12`.
    Kernel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorConfig {
    pub k: usize,
    pub m: Budget,
    pub bias: BiasSource,
    pub sigma_policy: SigmaPolicy,
    pub clamp: f64,
    pub support: Support,
    pub keep_per_point: bool,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            k: 5,
            m: Budget::default(),
            bias: BiasSource::default(),
            sigma_policy: SigmaPolicy::FallbackP1,
            clamp: DEFAULT_CLAMP,
            support: Support::Nearest,
            keep_per_point: false,
        }
    }
}

impl EstimatorConfig {
    pub fn new(k: usize) -> Self {
        Self { k, ..Self::default() }
    }

    pub fn budget(mut self, m: Budget) -> Self {
        self.m = m;
        self
    }

    pub fn bias(mut self, bias: BiasSource) -> Self {
        self.bias = bias;
        self
    }

    pub fn sigma_policy(mut self, policy: SigmaPolicy) -> Self {
        self.sigma_policy = policy;
        self
    }

    pub fn support(mut self, support: Support) -> Self {
        self.support = support;
        self
    }

    pub fn per_point(mut self, keep: bool) -> Self {
        self.keep_per_point = keep;
        self
    }
}

/// Result of an entropy estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub estimator: String,
    /// Estimate in nats.
    pub value: f64,
    pub n: usize,
    pub d: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    /// The requested budget exceeded `n - 1`.
    pub truncated: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bandwidth: Option<f64>,
    pub bias: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bias_stderr: Option<f64>,
    pub skipped: usize,
    pub clamped: usize,
    pub fallbacks: usize,
    /// Per-sample `log f(X_i)` of the points that were not skipped.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub per_point: Option<Vec<f64>>,
}

impl EstimateReport {
    pub fn bits(&self) -> f64 {
        self.value / std::f64::consts::LN_2
    }
}

#[derive(Debug, Clone, Copy)]
struct PointTerm {
    log_f: Option<f64>,
    fallback: bool,
    clamped: bool,
}

fn clamp_term(log_f: f64, clamp: f64) -> (f64, bool) {
    if log_f.is_nan() {
        (clamp, true)
    } else if log_f.abs() > clamp {
        (log_f.clamp(-clamp, clamp), true)
    } else {
        (log_f, false)
    }
}

fn local_term(
    cloud: &PointCloud,
    i: usize,
    h: f64,
    contributors: &[usize],
    degree: Degree,
    policy: SigmaPolicy,
    clamp: f64,
) -> Result<PointTerm> {
    if !(h > 0.0) {
        return Err(Error::DegenerateBandwidth(format!(
            "bandwidth {h} at sample {i} (duplicate samples?)"
        )));
    }
    let m = local_moments(cloud, cloud.row(i), h, Contributors::Indices(contributors))?;
    let (log_f, fallback) = match degree {
        Degree::P2 => match log_llde_p2_with_policy(&m, policy)? {
            PolicyOutcome::Value(v) => (Some(v), false),
            PolicyOutcome::Fallback(v) => (Some(v), true),
            PolicyOutcome::Skipped => (None, false),
        },
        other => (Some(log_llde(&m, other)?), false),
    };
    Ok(match log_f {
        Some(v) => {
            let (v, clamped) = clamp_term(v, clamp);
            PointTerm {
                log_f: Some(v),
                fallback,
                clamped,
            }
        }
        None => PointTerm {
            log_f: None,
            fallback,
            clamped: false,
        },
    })
}

struct Summary {
    mean_neg_log: f64,
    skipped: usize,
    clamped: usize,
    fallbacks: usize,
    per_point: Vec<f64>,
}

fn summarize(terms: Vec<PointTerm>) -> Result<Summary> {
    let mut total = 0.0;
    let mut per_point = Vec::with_capacity(terms.len());
    let (mut skipped, mut clamped, mut fallbacks) = (0, 0, 0);
    for t in &terms {
        match t.log_f {
            Some(v) => {
                total += v;
                per_point.push(v);
            }
            None => skipped += 1,
        }
        clamped += t.clamped as usize;
        fallbacks += t.fallback as usize;
    }
    if per_point.is_empty() {
        return Err(Error::EstimationFailure(
            "every sample was skipped (singular local covariance)".into(),
        ));
    }
    Ok(Summary {
        mean_neg_log: -total / per_point.len() as f64,
        skipped,
        clamped,
        fallbacks,
        per_point,
    })
}

fn check_k(k: usize, n: usize, min_n: usize) -> Result<()> {
    if k < 3 {
        return Err(Error::UnsupportedK { k });
    }
    if n < min_n {
        return Err(Error::InvalidArgument(format!(
            "n = {n} samples is too few for k = {k} (need at least {min_n})"
        )));
    }
    Ok(())
}

fn simulated_bias(req: BiasRequest) -> Result<BiasEstimate> {
    type Key = (usize, usize, usize, usize, u64, ExponentForm);
    static CACHE: OnceLock<Mutex<HashMap<Key, BiasEstimate>>> = OnceLock::new();
    let key = (req.k, req.d, req.m, req.samples, req.seed, req.form);
    let cache = CACHE.get_or_init(Default::default);
    if let Some(hit) = cache.lock().expect("bias cache").get(&key) {
        return Ok(hit.clone());
    }
    let estimate = bias_constant(&req)?;
    cache.lock().expect("bias cache").insert(key, estimate.clone());
    Ok(estimate)
}

/// Bias constant and its standard error for `(k, d, m)` under `source`.
pub fn resolve_bias(source: &BiasSource, k: usize, d: usize, m: usize, clamp: f64) -> Result<(f64, Option<f64>)> {
    match source {
        BiasSource::None => Ok((0.0, None)),
        BiasSource::Constant(b) => Ok((*b, None)),
        BiasSource::Table { table, form } => {
            let e = table.lookup(k, d, Some(m), *form)?;
            Ok((e.mean, Some(e.stderr)))
        }
        BiasSource::Simulate { samples, seed, form } => {
            let e = simulated_bias(BiasRequest::new(k, d, m, *samples, *seed).form(*form).clamp(clamp))?;
            Ok((e.mean, Some(e.stderr)))
        }
    }
}

/// Bias-corrected k-LNN entropy estimate (degree-2 local likelihood with
/// `k`-NN bandwidth).
pub fn entropy_klnn(cloud: &PointCloud, cfg: &EstimatorConfig) -> Result<EstimateReport> {
    let (n, d, k) = (cloud.n(), cloud.d(), cfg.k);
    check_k(k, n, k + 2)?;
    let (m, truncated) = cfg.m.resolve(n, k)?;
    let index = NeighborIndex::build(cloud.clone());
    let terms = try_map_range(n, |i| {
        let list = index.knn_of_sample(i, m)?;
        let h = list.entries[k - 1].distance;
        local_term(cloud, i, h, &list.indices(), Degree::P2, cfg.sigma_policy, cfg.clamp)
    })?;
    let (bias, bias_stderr) = resolve_bias(&cfg.bias, k, d, m, cfg.clamp)?;
    finish_report("klnn", cloud, cfg, Some(m), truncated, None, terms, bias, bias_stderr)
}

#[allow(clippy::too_many_arguments)]
fn finish_report(
    name: &str,
    cloud: &PointCloud,
    cfg: &EstimatorConfig,
    m: Option<usize>,
    truncated: bool,
    bandwidth: Option<f64>,
    terms: Vec<PointTerm>,
    bias: f64,
    bias_stderr: Option<f64>,
) -> Result<EstimateReport> {
    let s = summarize(terms)?;
    Ok(EstimateReport {
        estimator: name.to_string(),
        value: s.mean_neg_log - bias,
        n: cloud.n(),
        d: cloud.d(),
        k: Some(cfg.k),
        m,
        truncated,
        bandwidth,
        bias,
        bias_stderr,
        skipped: s.skipped,
        clamped: s.clamped,
        fallbacks: s.fallbacks,
        per_point: cfg.keep_per_point.then_some(s.per_point),
    })
}

/// Degree-2 resubstitution entropy with externally supplied bandwidths,
/// typically `k`-NN distances measured in a joint space.
pub fn entropy_lnn_coupled(marginal: &PointCloud, bandwidths: &[f64], cfg: &EstimatorConfig) -> Result<EstimateReport> {
    let (n, d, k) = (marginal.n(), marginal.d(), cfg.k);
    if bandwidths.len() != n {
        return Err(Error::InvalidArgument(format!(
            "{} bandwidths supplied for {n} samples",
            bandwidths.len()
        )));
    }
    check_k(k, n, k + 2)?;
    let (m, truncated) = cfg.m.resolve(n, k)?;
    let index = NeighborIndex::build(marginal.clone());
    let terms = try_map_range(n, |i| {
        let h = bandwidths[i];
        let contributors = match cfg.support {
            Support::Nearest => index.knn_of_sample(i, m)?.indices(),
            Support::Kernel => index.within_radius(i, KERNEL_SUPPORT * h).iter().map(|e| e.index).collect(),
        };
        if contributors.is_empty() {
            return Err(Error::EmptyNeighborhood(format!("no samples within the kernel support of sample {i}")));
        }
        local_term(marginal, i, h, &contributors, Degree::P2, cfg.sigma_policy, cfg.clamp)
    })?;
    let (bias, bias_stderr) = resolve_bias(&cfg.bias, k, d, m, cfg.clamp)?;
    let m_report = (cfg.support == Support::Nearest).then_some(m);
    finish_report("lnn-coupled", marginal, cfg, m_report, truncated, None, terms, bias, bias_stderr)
}

/// Classical `k`-NN (Kozachenko-Leonenko) entropy estimate,
/// `(d/n) sum log rho_k + log c_d + log n - psi(k)`.
pub fn entropy_kl(cloud: &PointCloud, k: usize) -> Result<EstimateReport> {
    entropy_kl_with(cloud, k, false)
}

pub fn entropy_kl_with(cloud: &PointCloud, k: usize, keep_per_point: bool) -> Result<EstimateReport> {
    let (n, d) = (cloud.n(), cloud.d());
    if k == 0 || n < k + 1 {
        return Err(Error::InvalidArgument(format!("KL estimator needs 1 <= k < n, got k = {k}, n = {n}")));
    }
    let rho = NeighborIndex::build(cloud.clone()).kth_distances(k)?;
    if let Some(i) = rho.iter().position(|&r| r <= 0.0) {
        return Err(Error::DegenerateBandwidth(format!(
            "k-NN distance is zero at sample {i} (duplicate samples?)"
        )));
    }
    let mean_log_rho = rho.iter().map(|r| r.ln()).sum::<f64>() / n as f64;
    let log_c = unit_ball_volume(d)?.ln();
    let log_n = (n as f64).ln();
    let bias = kl_bias_constant(k)?;
    let value = d as f64 * mean_log_rho + log_c + log_n - digamma(k as f64)?;
    let per_point = keep_per_point.then(|| {
        rho.iter()
            .map(|r| (k as f64).ln() - log_n - log_c - d as f64 * r.ln())
            .collect()
    });
    Ok(EstimateReport {
        estimator: "kl".into(),
        value,
        n,
        d,
        k: Some(k),
        m: None,
        truncated: false,
        bandwidth: None,
        bias,
        bias_stderr: None,
        skipped: 0,
        clamped: 0,
        fallbacks: 0,
        per_point,
    })
}

/// Global bandwidth rules for the KDE baseline; all scale `1.06 sigma`,
/// where `sigma` is the mean per-coordinate sample standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KdeRule {
    /// `n^{-1/5}`
    Rot,
    /// `n^{-1/(d+4)}`
    PowD4,
    /// `n^{-1/(d+2)}`
    PowD2,
}

impl std::str::FromStr for KdeRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rot" => Ok(KdeRule::Rot),
            "pow-d4" => Ok(KdeRule::PowD4),
            "pow-d2" => Ok(KdeRule::PowD2),
            other => Err(Error::InvalidArgument(format!(
                "unknown bandwidth rule '{other}' (expected rot, pow-d4 or pow-d2)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KdeBandwidth {
    Fixed(f64),
    Rule(KdeRule),
}

/// Mean of the per-coordinate sample standard deviations.
pub fn mean_coordinate_std(cloud: &PointCloud) -> f64 {
    let n = cloud.n() as f64;
    let d = cloud.d();
    (0..d)
        .map(|c| {
            let mean = cloud.rows().map(|r| r[c]).sum::<f64>() / n;
            let ss = cloud.rows().map(|r| (r[c] - mean).powi(2)).sum::<f64>();
            (ss / (n - 1.0).max(1.0)).sqrt()
        })
        .sum::<f64>()
        / d as f64
}

impl KdeBandwidth {
    pub fn resolve(self, cloud: &PointCloud) -> Result<f64> {
        let h = match self {
            KdeBandwidth::Fixed(h) => h,
            KdeBandwidth::Rule(rule) => {
                let n = cloud.n() as f64;
                let d = cloud.d() as f64;
                let exponent = match rule {
                    KdeRule::Rot => 1.0 / 5.0,
                    KdeRule::PowD4 => 1.0 / (d + 4.0),
                    KdeRule::PowD2 => 1.0 / (d + 2.0),
                };
                1.06 * mean_coordinate_std(cloud) * n.powf(-exponent)
            }
        };
        if h > 0.0 && h.is_finite() {
            Ok(h)
        } else {
            Err(Error::DegenerateBandwidth(format!("KDE bandwidth {h}")))
        }
    }
}

/// Leave-one-out Gaussian KDE resubstitution entropy.
pub fn entropy_kde(cloud: &PointCloud, bandwidth: KdeBandwidth) -> Result<EstimateReport> {
    entropy_kde_with(cloud, bandwidth, false, DEFAULT_CLAMP)
}

pub fn entropy_kde_with(cloud: &PointCloud, bandwidth: KdeBandwidth, keep_per_point: bool, clamp: f64) -> Result<EstimateReport> {
    let (n, d) = (cloud.n(), cloud.d());
    if n < 2 {
        return Err(Error::EstimationFailure("KDE entropy needs at least two samples".into()));
    }
    let h = bandwidth.resolve(cloud)?;
    let inv = 1.0 / (2.0 * h * h);
    let log_norm = (n as f64).ln() + 0.5 * d as f64 * (2.0 * PI).ln() + d as f64 * h.ln();
    let terms = map_range(n, |i| {
        let x = cloud.row(i);
        // log-sum-exp keeps tiny bandwidths finite
        let exps: Vec<f64> = (0..n)
            .filter(|&j| j != i)
            .map(|j| -inv * cloud.row(j).iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
            .collect();
        let top = exps.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let log_s0 = top + exps.iter().map(|e| (e - top).exp()).sum::<f64>().ln();
        let (v, clamped) = clamp_term(log_s0 - log_norm, clamp);
        PointTerm {
            log_f: Some(v),
            fallback: false,
            clamped,
        }
    });
    let s = summarize(terms)?;
    Ok(EstimateReport {
        estimator: "kde".into(),
        value: s.mean_neg_log,
        n,
        d,
        k: None,
        m: None,
        truncated: false,
        bandwidth: Some(h),
        bias: 0.0,
        bias_stderr: None,
        skipped: 0,
        clamped: s.clamped,
        fallbacks: 0,
        per_point: keep_per_point.then_some(s.per_point),
    })
}

/// Kernel of a generic local-likelihood resubstitution estimator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kernel {
    Gaussian,
    /// Indicator of the ball of radius `h`.
    Step,
}

/// Distribution of the calibration samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CalibrationSource {
    /// Uniform on `[0, 1]^d`; only samples in `[0.25, 0.75]^d` are scored so
    /// the boundary does not contribute.
    UniformCube,
    StandardGaussian,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationRequest {
    pub k: usize,
    pub d: usize,
    pub degree: Degree,
    pub kernel: Kernel,
    /// Samples per replicate.
    pub n: usize,
    pub replicates: usize,
    pub m: Budget,
    pub seed: u64,
    pub source: CalibrationSource,
}

/// Empirical bias of an uncorrected estimator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationEstimate {
    pub k: usize,
    pub d: usize,
    pub degree: usize,
    pub kernel: Kernel,
    pub m: usize,
    pub n: usize,
    pub replicates: usize,
    pub mean: f64,
    /// Standard error over replicates.
    pub stderr: f64,
    pub seed: u64,
    pub source: CalibrationSource,
}

/// Per-sample `log f(X_i)` of an uncorrected local-likelihood estimator with
/// `k`-NN bandwidth; `None` marks skipped samples.
pub fn raw_log_densities(
    cloud: &PointCloud,
    k: usize,
    m: usize,
    degree: Degree,
    kernel: Kernel,
    policy: SigmaPolicy,
) -> Result<Vec<Option<f64>>> {
    let n = cloud.n();
    if k == 0 || k > m || m > n.saturating_sub(1) {
        return Err(Error::InvalidArgument(format!("need 1 <= k <= m <= n - 1, got k = {k}, m = {m}, n = {n}")));
    }
    let index = NeighborIndex::build(cloud.clone());
    match kernel {
        Kernel::Step => {
            if degree != Degree::P0 {
                return Err(Error::Unsupported(format!(
                    "step kernel has a closed form only for degree 0, not {}",
                    degree.index()
                )));
            }
            let log_c = unit_ball_volume(cloud.d())?.ln();
            let rho = index.kth_distances(k)?;
            rho.iter()
                .enumerate()
                .map(|(i, &r)| {
                    if r > 0.0 {
                        Ok(Some((k as f64).ln() - (n as f64).ln() - log_c - cloud.d() as f64 * r.ln()))
                    } else {
                        Err(Error::DegenerateBandwidth(format!("k-NN distance is zero at sample {i}")))
                    }
                })
                .collect()
        }
        Kernel::Gaussian => {
            let terms = try_map_range(n, |i| {
                let list = index.knn_of_sample(i, m)?;
                let h = list.entries[k - 1].distance;
                local_term(cloud, i, h, &list.indices(), degree, policy, DEFAULT_CLAMP)
            })?;
            Ok(terms.into_iter().map(|t| t.log_f).collect())
        }
    }
}

/// Estimates the asymptotic bias of an uncorrected estimator by running it on
/// samples with known density and averaging `-log f_hat(X_i) + log f(X_i)`.
pub fn calibrate_bias_generic(req: &CalibrationRequest) -> Result<CalibrationEstimate> {
    let (k, d, n) = (req.k, req.d, req.n);
    if req.kernel == Kernel::Step && req.degree != Degree::P0 {
        return Err(Error::Unsupported(format!(
            "step kernel with degree {} has no closed form",
            req.degree.index()
        )));
    }
    if req.replicates == 0 || d == 0 || k == 0 || n < k + 2 {
        return Err(Error::InvalidArgument("calibration needs replicates >= 1, d >= 1 and n >= k + 2".into()));
    }
    let (m, _) = req.m.resolve(n, k)?;
    let half_log_2pi = 0.5 * (2.0 * PI).ln();
    let mut acc = Welford::new();
    for r in 0..req.replicates {
        let mut rng = replica_rng(req.seed, r as u64);
        let data: Vec<f64> = match req.source {
            CalibrationSource::UniformCube => (0..n * d).map(|_| rng.random::<f64>()).collect(),
            CalibrationSource::StandardGaussian => (0..n * d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect(),
        };
        let cloud = PointCloud::new(n, d, data)?;
        let logs = raw_log_densities(&cloud, k, m, req.degree, req.kernel, SigmaPolicy::FallbackP1)?;
        let mut total = 0.0;
        let mut count = 0usize;
        for (i, log_f) in logs.iter().enumerate() {
            let Some(log_f) = log_f else { continue };
            let x = cloud.row(i);
            let log_true = match req.source {
                CalibrationSource::UniformCube => {
                    if !x.iter().all(|&v| (0.25..=0.75).contains(&v)) {
                        continue;
                    }
                    0.0
                }
                CalibrationSource::StandardGaussian => {
                    -(d as f64) * half_log_2pi - 0.5 * x.iter().map(|v| v * v).sum::<f64>()
                }
            };
            total += log_true - log_f;
            count += 1;
        }
        if count == 0 {
            return Err(Error::EstimationFailure(format!("replicate {r} scored no samples")));
        }
        acc.push(total / count as f64);
    }
    Ok(CalibrationEstimate {
        k,
        d,
        degree: req.degree.index(),
        kernel: req.kernel,
        m,
        n,
        replicates: req.replicates,
        mean: acc.mean(),
        stderr: acc.stderr(),
        seed: req.seed,
        source: req.source,
    })
}
