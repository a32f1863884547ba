//! Universal bias constants of the k-LNN entropy estimator.
//!
//! The bias does not depend on the sampled distribution. It is the mean of a
//! functional of the limiting nearest-neighbor geometry: partial sums
//! `T_j = E_1 + ... + E_j` of standard exponentials paired with uniform
//! directions `xi_j`. With `R_j = (T_j / T_k)^{1/d}` (or `T_j / T_k` in the
//! main-text form),
//!
//! ```text
//! S0 = sum_j exp(-R_j^2 / 2)
//! S1 = sum_j xi_j R_j exp(-R_j^2 / 2)
//! S2 = sum_j xi_j xi_j^T R_j^2 exp(-R_j^2 / 2)
//! ```
//!
//! and `B_{k,d}` is the mean of
//! `log T_k + (d/2) log 2pi - log c_d - log S0 + 1/2 log|Sigma| + 1/2 S1^T Sigma^-1 S1 / S0^2`.

use std::fmt;
use std::path::Path;

use rand::Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::map_range;
use crate::linalg::{det_inv_sym_with_floor, norm, scale_floor, SmallMatrix};
use crate::rng::{replica_rng, unit_direction};
use crate::special::{digamma, unit_ball_volume};
use crate::stats::Welford;

/// Kernel weight below which the series is cut off.
pub const WEIGHT_CUTOFF: f64 = 1e-12;
pub const DEFAULT_CLAMP: f64 = 1e10;
/// Series truncation used for publication-grade tables.
pub const DEFAULT_TRUNCATION: usize = 50_000;
pub const TABLE_SCHEMA: &str = "bias-table/1";

const CHUNK: usize = 2048;

/// Exponent applied to the `T_j / T_k` ratios.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExponentForm {
    /// `R_j = (T_j / T_k)^{1/d}`, matching the `d`-th root scaling of
    /// nearest-neighbor radii.
    #[default]
    AppendixScaled,
    /// `R_j = T_j / T_k`.
    MainText,
}

impl ExponentForm {
    pub fn as_str(self) -> &'static str {
        match self {
            ExponentForm::AppendixScaled => "appendix-scaled",
            ExponentForm::MainText => "main-text",
        }
    }

    fn radius(self, ratio: f64, d: usize) -> f64 {
        match self {
            ExponentForm::AppendixScaled if d == 1 => ratio,
            ExponentForm::AppendixScaled => ratio.powf(1.0 / d as f64),
            ExponentForm::MainText => ratio,
        }
    }
}

impl fmt::Display for ExponentForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ExponentForm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "appendix-scaled" | "appendix" => Ok(ExponentForm::AppendixScaled),
            "main-text" | "maintext" => Ok(ExponentForm::MainText),
            other => Err(Error::InvalidArgument(format!(
                "unknown exponent form '{other}' (expected appendix-scaled or main-text)"
            ))),
        }
    }
}

/// One draw of the limiting order-statistics construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderStatDraw {
    pub k: usize,
    pub d: usize,
    pub m: usize,
    pub t_k: f64,
    pub xi_k: Vec<f64>,
    pub s0: f64,
    pub s1: Vec<f64>,
    pub s2: SmallMatrix,
    /// Number of series terms accumulated.
    pub terms: usize,
}

fn validate(k: usize, d: usize, m: usize) -> Result<()> {
    if k < 3 {
        return Err(Error::UnsupportedK { k });
    }
    if d == 0 {
        return Err(Error::InvalidArgument("dimension must be >= 1".into()));
    }
    if m <= k {
        return Err(Error::InvalidArgument(format!(
            "series truncation m = {m} must exceed k = {k}"
        )));
    }
    Ok(())
}

/// Reusable buffers for repeated draws.
struct Sampler {
    k: usize,
    d: usize,
    m: usize,
    form: ExponentForm,
    early_stop: bool,
    head_t: Vec<f64>,
    head_xi: Vec<f64>,
    xi: Vec<f64>,
    s1: Vec<f64>,
    s2: SmallMatrix,
}

impl Sampler {
    fn new(k: usize, d: usize, m: usize, form: ExponentForm, early_stop: bool) -> Self {
        Self {
            k,
            d,
            m,
            form,
            early_stop,
            head_t: vec![0.0; k],
            head_xi: vec![0.0; k * d],
            xi: vec![0.0; d],
            s1: vec![0.0; d],
            s2: SmallMatrix::zeros(d),
        }
    }

    /// Fills the moment buffers; returns `(t_k, s0, terms)`.
    fn draw<R: Rng + ?Sized>(&mut self, rng: &mut R, mut on_weight: impl FnMut(f64)) -> (f64, f64, usize) {
        let (k, d) = (self.k, self.d);
        // The first k terms need T_k before their ratios are known.
        let mut t = 0.0;
        for j in 0..k {
            t += rng.sample::<f64, _>(Exp1);
            self.head_t[j] = t;
            unit_direction(rng, d, &mut self.head_xi[j * d..(j + 1) * d]);
        }
        let t_k = t;
        self.s1.iter_mut().for_each(|v| *v = 0.0);
        self.s2 = SmallMatrix::zeros(d);
        let mut s0 = 0.0;
        let mut terms = 0;
        for j in 0..k {
            let r = self.form.radius(self.head_t[j] / t_k, d);
            let w = (-0.5 * r * r).exp();
            on_weight(w);
            s0 += w;
            let xi = &self.head_xi[j * d..(j + 1) * d];
            add_term(&mut self.s1, &mut self.s2, xi, r, w);
            terms += 1;
        }
        for _ in k..self.m {
            t += rng.sample::<f64, _>(Exp1);
            unit_direction(rng, d, &mut self.xi);
            let r = self.form.radius(t / t_k, d);
            let w = (-0.5 * r * r).exp();
            // ratios only grow past j = k, so the weights are decreasing
            if self.early_stop && w < WEIGHT_CUTOFF {
                break;
            }
            on_weight(w);
            s0 += w;
            add_term(&mut self.s1, &mut self.s2, &self.xi, r, w);
            terms += 1;
        }
        (t_k, s0, terms)
    }
}

#[inline]
fn add_term(s1: &mut [f64], s2: &mut SmallMatrix, xi: &[f64], r: f64, w: f64) {
    let rw = r * w;
    for (s, x) in s1.iter_mut().zip(xi) {
        *s += x * rw;
    }
    s2.add_outer(xi, r * rw);
}

/// One draw with early termination once kernel weights fall below
/// [`WEIGHT_CUTOFF`].
pub fn sample_order_stats<R: Rng + ?Sized>(
    k: usize,
    d: usize,
    m: usize,
    form: ExponentForm,
    rng: &mut R,
) -> Result<OrderStatDraw> {
    sample_order_stats_with(k, d, m, form, true, rng)
}

/// As [`sample_order_stats`], optionally summing all `m` terms.
pub fn sample_order_stats_with<R: Rng + ?Sized>(
    k: usize,
    d: usize,
    m: usize,
    form: ExponentForm,
    early_stop: bool,
    rng: &mut R,
) -> Result<OrderStatDraw> {
    validate(k, d, m)?;
    let mut sampler = Sampler::new(k, d, m, form, early_stop);
    let (t_k, s0, terms) = sampler.draw(rng, |_| {});
    Ok(OrderStatDraw {
        k,
        d,
        m,
        t_k,
        xi_k: sampler.head_xi[(k - 1) * d..k * d].to_vec(),
        s0,
        s1: sampler.s1,
        s2: sampler.s2,
        terms,
    })
}

/// Kernel weights of all `m` series terms of one draw, in order.
pub fn order_stat_weights<R: Rng + ?Sized>(
    k: usize,
    d: usize,
    m: usize,
    form: ExponentForm,
    rng: &mut R,
) -> Result<Vec<f64>> {
    validate(k, d, m)?;
    let mut sampler = Sampler::new(k, d, m, form, false);
    let mut weights = Vec::with_capacity(m);
    sampler.draw(rng, |w| weights.push(w));
    Ok(weights)
}

/// Value of the bias functional for one draw.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HValue {
    pub value: f64,
    /// `Sigma` was singular and the value was set to `+clamp`.
    pub degenerate: bool,
    pub clamped: bool,
}

/// The bias functional with `t1 = xi_k T_k^{1/d}`, so `d log|t1| = log T_k`.
pub fn h_functional(t1: &[f64], s0: f64, s1: &[f64], s2: &SmallMatrix, d: usize, clamp: f64) -> Result<HValue> {
    if t1.len() != d || s1.len() != d || s2.dim() != d {
        return Err(Error::InvalidArgument("dimension mismatch in bias functional".into()));
    }
    h_from_log_tk(d as f64 * norm(t1).ln(), s0, s1, s2, clamp)
}

fn h_from_log_tk(log_tk: f64, s0: f64, s1: &[f64], s2: &SmallMatrix, clamp: f64) -> Result<HValue> {
    if !(s0 > 0.0) {
        return Err(Error::InvalidArgument(format!("S0 must be positive, got {s0}")));
    }
    let d = s1.len();
    let mut sigma = SmallMatrix::zeros(d);
    for a in 0..d {
        for b in 0..d {
            sigma[(a, b)] = s2[(a, b)] / s0 - (s1[a] / s0) * (s1[b] / s0);
        }
    }
    let floor = scale_floor(s2.trace() / s0, d);
    let (det, inv) = match det_inv_sym_with_floor(&sigma, floor) {
        Ok((det, inv)) if det > 0.0 => (det, inv),
        Ok(_) | Err(Error::SingularMatrix { .. }) => {
            return Ok(HValue {
                value: clamp,
                degenerate: true,
                clamped: true,
            })
        }
        Err(e) => return Err(e),
    };
    let df = d as f64;
    let value = log_tk + 0.5 * df * (2.0 * std::f64::consts::PI).ln() - unit_ball_volume(d)?.ln() - s0.ln()
        + 0.5 * det.ln()
        + 0.5 * inv.quad_form(s1) / (s0 * s0);
    if !value.is_finite() || value.abs() > clamp {
        let value = if value.is_nan() { clamp } else { value.clamp(-clamp, clamp) };
        return Ok(HValue {
            value,
            degenerate: false,
            clamped: true,
        });
    }
    Ok(HValue {
        value,
        degenerate: false,
        clamped: false,
    })
}

/// Monte Carlo estimate of one bias constant, persisted as a table entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BiasEstimate {
    pub k: usize,
    pub d: usize,
    pub m: usize,
    pub samples: usize,
    pub mean: f64,
    pub stderr: f64,
    pub second_moment: f64,
    pub clamp: f64,
    pub exponent_form: ExponentForm,
    pub seed: u64,
    pub degenerate_count: u64,
}

/// Settings for [`bias_constant`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BiasRequest {
    pub k: usize,
    pub d: usize,
    pub m: usize,
    pub samples: usize,
    pub seed: u64,
    pub form: ExponentForm,
    pub clamp: f64,
}

impl BiasRequest {
    pub fn new(k: usize, d: usize, m: usize, samples: usize, seed: u64) -> Self {
        Self {
            k,
            d,
            m,
            samples,
            seed,
            form: ExponentForm::default(),
            clamp: DEFAULT_CLAMP,
        }
    }

    pub fn form(mut self, form: ExponentForm) -> Self {
        self.form = form;
        self
    }

    pub fn clamp(mut self, clamp: f64) -> Self {
        self.clamp = clamp;
        self
    }
}

/// Mean of the bias functional over `samples` independent draws.
///
/// Draw `r` uses its own generator derived from `(seed, r)` and draws are
/// reduced in fixed-size chunks merged in order, so the result does not
/// depend on the number of workers.
pub fn bias_constant(req: &BiasRequest) -> Result<BiasEstimate> {
    validate(req.k, req.d, req.m)?;
    if req.samples == 0 {
        return Err(Error::InvalidArgument("samples must be >= 1".into()));
    }
    if !(req.clamp > 0.0) {
        return Err(Error::InvalidArgument("clamp must be positive".into()));
    }
    let chunks = req.samples.div_ceil(CHUNK);
    let partials = map_range(chunks, |c| -> Result<(Welford, u64)> {
        let mut sampler = Sampler::new(req.k, req.d, req.m, req.form, true);
        let mut acc = Welford::new();
        let mut degenerate = 0u64;
        for r in c * CHUNK..((c + 1) * CHUNK).min(req.samples) {
            let mut rng = replica_rng(req.seed, r as u64);
            let (t_k, s0, _) = sampler.draw(&mut rng, |_| {});
            let h = h_from_log_tk(t_k.ln(), s0, &sampler.s1, &sampler.s2, req.clamp)?;
            degenerate += h.degenerate as u64;
            acc.push(h.value);
        }
        Ok((acc, degenerate))
    });
    let mut total = Welford::new();
    let mut degenerate_count = 0;
    for part in partials {
        let (acc, deg) = part?;
        total.merge(&acc);
        degenerate_count += deg;
    }
    Ok(BiasEstimate {
        k: req.k,
        d: req.d,
        m: req.m,
        samples: req.samples,
        mean: total.mean(),
        stderr: total.stderr(),
        second_moment: total.second_moment(),
        clamp: req.clamp,
        exponent_form: req.form,
        seed: req.seed,
        degenerate_count,
    })
}

/// Asymptotic bias of the classical k-NN entropy estimator, `psi(k) - ln k`.
pub fn kl_bias_constant(k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be >= 1".into()));
    }
    Ok(digamma(k as f64)? - (k as f64).ln())
}

/// CDF of `R_j = (T_j / T_k)^{1/d}` for `j >= k`.
///
/// `F(t) = 1 - sum_{l=0}^{j-k-1} C(k-1+l, l) t^{-dk} (1 - t^{-d})^l`, summed in
/// log space.
pub fn rj_cdf(j: usize, k: usize, d: usize, t: f64) -> Result<f64> {
    if k == 0 || d == 0 || j < k {
        return Err(Error::InvalidArgument(format!(
            "rj_cdf needs 1 <= k <= j and d >= 1, got j = {j}, k = {k}, d = {d}"
        )));
    }
    if t.is_nan() {
        return Err(Error::InvalidArgument("t is NaN".into()));
    }
    if t < 1.0 {
        return Ok(0.0);
    }
    if j == k {
        return Ok(1.0);
    }
    if t == f64::INFINITY {
        return Ok(1.0);
    }
    let df = d as f64;
    let log_t_pow = -df * t.ln();
    let log_head = k as f64 * log_t_pow;
    // ln(1 - t^-d), accurate near t = 1
    let log_tail = (-(log_t_pow.exp())).ln_1p();
    let mut log_binom = 0.0;
    let mut tail_mass = 0.0;
    for l in 0..j - k {
        if l > 0 {
            log_binom += ((k - 1 + l) as f64 / l as f64).ln();
        }
        let log_term = if l == 0 { log_head } else { log_binom + log_head + l as f64 * log_tail };
        tail_mass += log_term.exp();
    }
    Ok((1.0 - tail_mass).clamp(0.0, 1.0))
}

/// One sample of `R_j = (T_j / T_k)^{1/d}`.
pub fn sample_rj<R: Rng + ?Sized>(j: usize, k: usize, d: usize, rng: &mut R) -> f64 {
    let mut t = 0.0;
    let mut t_k = 0.0;
    for i in 1..=j {
        t += rng.sample::<f64, _>(Exp1);
        if i == k {
            t_k = t;
        }
    }
    (t / t_k).powf(1.0 / d as f64)
}

/// A persisted set of bias constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BiasTable {
    pub schema: String,
    pub table: Vec<BiasEstimate>,
}

impl Default for BiasTable {
    fn default() -> Self {
        Self::new(Vec::new())
    }
}

impl BiasTable {
    pub fn new(entries: Vec<BiasEstimate>) -> Self {
        Self {
            schema: TABLE_SCHEMA.to_string(),
            table: entries,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("bias table serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let table: BiasTable = serde_json::from_str(text).map_err(|e| Error::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        if table.schema != TABLE_SCHEMA {
            return Err(Error::Parse {
                line: 1,
                column: 1,
                message: format!("unsupported schema '{}', expected '{TABLE_SCHEMA}'", table.schema),
            });
        }
        Ok(table)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Entry for `(k, d)` in the requested form. With `m` given an exact
    /// match is preferred; otherwise the entry with the largest `m` is used.
    pub fn lookup(&self, k: usize, d: usize, m: Option<usize>, form: ExponentForm) -> Result<&BiasEstimate> {
        let candidates: Vec<&BiasEstimate> = self.table.iter().filter(|e| e.k == k && e.d == d).collect();
        let Some(first) = candidates.first() else {
            return Err(Error::MissingEntry { k, d });
        };
        let in_form: Vec<&BiasEstimate> = candidates.iter().copied().filter(|e| e.exponent_form == form).collect();
        if in_form.is_empty() {
            return Err(Error::FormMismatch {
                k,
                d,
                found: first.exponent_form.to_string(),
                requested: form.to_string(),
            });
        }
        if let Some(m) = m {
            if let Some(exact) = in_form.iter().find(|e| e.m == m) {
                return Ok(exact);
            }
        }
        Ok(in_form.into_iter().max_by_key(|e| e.m).expect("non-empty"))
    }

    /// Adds `entry`, replacing any entry with the same `(k, d, m, form)`.
    pub fn upsert(&mut self, entry: BiasEstimate) {
        self.table
            .retain(|e| !(e.k == entry.k && e.d == entry.d && e.m == entry.m && e.exponent_form == entry.exponent_form));
        self.table.push(entry);
        self.table
            .sort_by_key(|e| (e.d, e.k, e.m, e.exponent_form == ExponentForm::MainText));
    }
}

pub fn save_bias_table(entries: &[BiasEstimate], path: &Path) -> Result<()> {
    BiasTable::new(entries.to_vec()).save(path)
}

pub fn load_bias_table(path: &Path, k: usize, d: usize, form: ExponentForm) -> Result<BiasEstimate> {
    BiasTable::load(path)?.lookup(k, d, None, form).cloned()
}
