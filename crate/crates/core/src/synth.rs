//! Seeded synthetic scenarios with their ground-truth entropies and mutual
//! informations.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::SmallMatrix;
use crate::mutual_info::JointSample;
use crate::neighbors::PointCloud;
use crate::rng::replica_rng;

/// `3^8 / 2`, the noise half-width as printed for the multilinear scenario.
pub const NOISE_HALFWIDTH_LITERAL: f64 = 3280.5;
/// `3^-8 / 2`
pub const NOISE_HALFWIDTH_ALTERNATE: f64 = 1.0 / 13122.0;
/// Uniform noise width of the additive scenario.
pub const DEFAULT_ADDITIVE_WIDTH: f64 = 0.01;

const LOG_2PIE: f64 = 2.837_877_066_409_345_5;
const QUAD_TOLERANCE: f64 = 1e-12;

/// Deterministic maps of `X ~ U[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Function {
    X,
    X2,
    X3,
    Exp2,
    Sin4Pi,
    Cos5Pi,
}

impl Function {
    pub const ALL: [Function; 6] = [
        Function::X,
        Function::X2,
        Function::X3,
        Function::Exp2,
        Function::Sin4Pi,
        Function::Cos5Pi,
    ];

    pub fn eval(self, x: f64) -> f64 {
        use std::f64::consts::PI;
        match self {
            Function::X => x,
            Function::X2 => x * x,
            Function::X3 => x * x * x,
            Function::Exp2 => x.exp2(),
            Function::Sin4Pi => (4.0 * PI * x).sin(),
            Function::Cos5Pi => (5.0 * PI * x * (1.0 - x)).cos(),
        }
    }

    pub fn token(self) -> &'static str {
        match self {
            Function::X => "x",
            Function::X2 => "x2",
            Function::X3 => "x3",
            Function::Exp2 => "exp2",
            Function::Sin4Pi => "sin",
            Function::Cos5Pi => "cos",
        }
    }

    /// Breakpoints of `[0, 1]` between which the map is monotone.
    fn pieces(self) -> Vec<f64> {
        match self {
            Function::Sin4Pi => vec![0.0, 0.125, 0.375, 0.625, 0.875, 1.0],
            Function::Cos5Pi => {
                // 5 pi x (1 - x) = pi
                let a = 0.5 * (1.0 - 1.0 / 5f64.sqrt());
                vec![0.0, a, 0.5, 1.0 - a, 1.0]
            }
            _ => vec![0.0, 1.0],
        }
    }

    /// `P(f(X) <= t)` for `X ~ U[0, 1]`.
    fn cdf(self, t: f64) -> f64 {
        self.pieces()
            .windows(2)
            .map(|p| {
                let (a, b) = (p[0], p[1]);
                let (fa, fb) = (self.eval(a), self.eval(b));
                let increasing = fa <= fb;
                let (lo, hi) = if increasing { (fa, fb) } else { (fb, fa) };
                if t < lo {
                    return 0.0;
                }
                if t >= hi {
                    return b - a;
                }
                let (mut l, mut r) = (a, b);
                for _ in 0..200 {
                    let mid = 0.5 * (l + r);
                    if mid <= l || mid >= r {
                        break;
                    }
                    if (self.eval(mid) <= t) == increasing {
                        l = mid;
                    } else {
                        r = mid;
                    }
                }
                let root = 0.5 * (l + r);
                if increasing {
                    root - a
                } else {
                    b - root
                }
            })
            .sum()
    }

    fn kinks(self) -> Vec<f64> {
        self.pieces().into_iter().map(|x| self.eval(x)).collect()
    }
}

impl fmt::Display for Function {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for Function {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Function::ALL
            .into_iter()
            .find(|f| f.token() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown function '{s}' (expected x, x2, x3, exp2, sin or cos)")))
    }
}

/// Scenario family. String forms: `gauss-corr-2d`, `gauss-block-6d`,
/// `gauss-mixture`, `near-functional:<f>`, `uniform-additive` and
/// `multilinear-uniform:<x|x2>:<dims>`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Family {
    /// Standard bivariate Gaussian with correlation `r`.
    GaussCorr2d,
    /// Six standard Gaussians, coordinate pairs (1,2), (3,4), (5,6)
    /// correlated with `r`.
    GaussBlock6d,
    /// Equal-weight mixture of bivariate Gaussians with correlation `r` and `-r`.
    GaussMixture,
    /// `Y = f(X) + U`, `X ~ U[0,1]`, `U ~ U[0, theta]`.
    NearFunctional(Function),
    /// `Y = X + U`, `X ~ U[0,1]`, `U ~ U[0, theta]`.
    UniformAdditive,
    /// `Y = sum_i g(X_i) + U`, `X ~ U[0,1]^dims`, `U ~ U[-w, w]`.
    MultilinearUniform { terms: Function, dims: usize },
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Family::GaussCorr2d => f.write_str("gauss-corr-2d"),
            Family::GaussBlock6d => f.write_str("gauss-block-6d"),
            Family::GaussMixture => f.write_str("gauss-mixture"),
            Family::NearFunctional(g) => write!(f, "near-functional:{g}"),
            Family::UniformAdditive => f.write_str("uniform-additive"),
            Family::MultilinearUniform { terms, dims } => write!(f, "multilinear-uniform:{terms}:{dims}"),
        }
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut parts = s.split(':');
        let head = parts.next().unwrap_or_default();
        let rest: Vec<&str> = parts.collect();
        let family = match (head, rest.as_slice()) {
            ("gauss-corr-2d", []) => Family::GaussCorr2d,
            ("gauss-block-6d", []) => Family::GaussBlock6d,
            ("gauss-mixture", []) => Family::GaussMixture,
            ("near-functional", []) => Family::NearFunctional(Function::X),
            ("near-functional", [g]) => Family::NearFunctional(g.parse()?),
            ("uniform-additive", []) => Family::UniformAdditive,
            ("multilinear-uniform", []) => Family::MultilinearUniform {
                terms: Function::X,
                dims: 1,
            },
            ("multilinear-uniform", [g, dims]) => {
                let terms: Function = g.parse()?;
                if !matches!(terms, Function::X | Function::X2) {
                    return Err(Error::InvalidArgument("multilinear terms must be x or x2".into()));
                }
                let dims = dims
                    .parse()
                    .map_err(|_| Error::InvalidArgument(format!("bad dimension '{dims}' in family '{s}'")))?;
                if !(1..=8).contains(&dims) {
                    return Err(Error::InvalidArgument(format!("multilinear dims must be in 1..=8, got {dims}")));
                }
                Family::MultilinearUniform { terms, dims }
            }
            _ => return Err(Error::InvalidArgument(format!("unknown scenario family '{s}'"))),
        };
        Ok(family)
    }
}

impl TryFrom<String> for Family {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Family> for String {
    fn from(f: Family) -> String {
        f.to_string()
    }
}

impl Family {
    /// Columns of a draw belonging to `X`; the rest form `Y`.
    pub fn dims_x(self) -> usize {
        match self {
            Family::GaussBlock6d => 3,
            Family::MultilinearUniform { dims, .. } => dims,
            _ => 1,
        }
    }

    pub fn dim(self) -> usize {
        match self {
            Family::GaussBlock6d => 6,
            Family::MultilinearUniform { dims, .. } => dims + 1,
            _ => 2,
        }
    }

    /// Name of the scalar parameter: `r`, `theta` or `noise-halfwidth`.
    pub fn param_name(self) -> &'static str {
        match self {
            Family::GaussCorr2d | Family::GaussBlock6d | Family::GaussMixture => "r",
            Family::NearFunctional(_) | Family::UniformAdditive => "theta",
            Family::MultilinearUniform { .. } => "noise-halfwidth",
        }
    }

    fn default_param(self) -> Option<f64> {
        match self {
            Family::UniformAdditive => Some(DEFAULT_ADDITIVE_WIDTH),
            Family::MultilinearUniform { .. } => Some(NOISE_HALFWIDTH_LITERAL),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub family: Family,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_halfwidth: Option<f64>,
    pub n: usize,
    #[serde(default)]
    pub seed: u64,
}

impl ScenarioSpec {
    pub fn new(family: Family, n: usize, seed: u64) -> Self {
        Self {
            family,
            r: None,
            theta: None,
            noise_halfwidth: None,
            n,
            seed,
        }
    }

    /// Sets the family's scalar parameter.
    pub fn param(mut self, value: f64) -> Self {
        match self.family.param_name() {
            "r" => self.r = Some(value),
            "theta" => self.theta = Some(value),
            _ => self.noise_halfwidth = Some(value),
        }
        self
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }

    /// The validated scalar parameter.
    pub fn resolved_param(&self) -> Result<f64> {
        let name = self.family.param_name();
        let given = [("r", self.r), ("theta", self.theta), ("noise-halfwidth", self.noise_halfwidth)];
        for (other, v) in given {
            if other != name && v.is_some() {
                return Err(Error::InvalidArgument(format!("{} takes {name}, not {other}", self.family)));
            }
        }
        let value = given
            .iter()
            .find(|(other, _)| *other == name)
            .and_then(|(_, v)| *v)
            .or(self.family.default_param())
            .ok_or_else(|| Error::InvalidArgument(format!("{} needs {name}", self.family)))?;
        let ok = match name {
            "r" => value.abs() < 1.0,
            _ => value > 0.0 && value.is_finite(),
        };
        if !ok {
            let rule = if name == "r" { "|r| < 1" } else { "a positive finite value" };
            return Err(Error::InvalidArgument(format!("{name} = {value} is invalid; need {rule}")));
        }
        Ok(value)
    }

    pub fn validate(&self) -> Result<f64> {
        if self.n < 2 {
            return Err(Error::InvalidArgument(format!("need n >= 2, got {}", self.n)));
        }
        self.resolved_param()
    }

    /// Key/value annotations describing assumptions baked into the scenario.
    pub fn metadata(&self) -> Vec<(&'static str, String)> {
        let mut out = vec![("family", self.family.to_string()), ("dims_x", self.family.dims_x().to_string())];
        if let Ok(p) = self.resolved_param() {
            out.push((self.family.param_name(), p.to_string()));
        }
        if self.family == Family::GaussMixture {
            out.push(("mixture_weights", "0.5,0.5".to_string()));
        }
        out
    }
}

/// A generated sample with its X/Y split.
#[derive(Debug, Clone, PartialEq)]
pub struct Synthetic {
    pub cloud: PointCloud,
    pub dims_x: usize,
}

impl Synthetic {
    pub fn joint_sample(&self) -> Result<JointSample> {
        JointSample::split(&self.cloud, self.dims_x)
    }
}

fn bivariate_factor(r: f64) -> SmallMatrix {
    SmallMatrix::from_rows(&[&[1.0, r], &[r, 1.0]])
        .cholesky()
        .expect("|r| < 1 is positive definite")
}

fn push_correlated<R: Rng>(rng: &mut R, l: &SmallMatrix, out: &mut Vec<f64>) {
    let z = [rng.sample::<f64, _>(StandardNormal), rng.sample::<f64, _>(StandardNormal)];
    out.extend(l.mul_vec(&z));
}

/// Draws `spec.n` i.i.d. samples.
pub fn generate(spec: &ScenarioSpec) -> Result<Synthetic> {
    let p = spec.validate()?;
    let family = spec.family;
    let (n, d) = (spec.n, family.dim());
    let mut rng = replica_rng(spec.seed, 0);
    let mut data = Vec::with_capacity(n * d);
    match family {
        Family::GaussCorr2d | Family::GaussBlock6d => {
            let l = bivariate_factor(p);
            for _ in 0..n * d / 2 {
                push_correlated(&mut rng, &l, &mut data);
            }
        }
        Family::GaussMixture => {
            let factors = [bivariate_factor(p), bivariate_factor(-p)];
            for _ in 0..n {
                let c = rng.random::<bool>() as usize;
                push_correlated(&mut rng, &factors[c], &mut data);
            }
        }
        Family::NearFunctional(f) => {
            for _ in 0..n {
                let x: f64 = rng.random();
                let u: f64 = rng.random::<f64>() * p;
                data.extend([x, f.eval(x) + u]);
            }
        }
        Family::UniformAdditive => {
            for _ in 0..n {
                let x: f64 = rng.random();
                let u: f64 = rng.random::<f64>() * p;
                data.extend([x, x + u]);
            }
        }
        Family::MultilinearUniform { terms, dims } => {
            for _ in 0..n {
                let mut s = 0.0;
                for _ in 0..dims {
                    let x: f64 = rng.random();
                    s += terms.eval(x);
                    data.push(x);
                }
                let u = (2.0 * rng.random::<f64>() - 1.0) * p;
                data.push(s + u);
            }
        }
    }
    Ok(Synthetic {
        cloud: PointCloud::new(n, d, data)?,
        dims_x: family.dims_x(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Quantity {
    /// Differential entropy of the full draw.
    Entropy,
    /// Mutual information between the X and Y columns.
    MutualInformation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TruthKind {
    Exact,
    UpperBound,
    Numeric,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub value: f64,
    pub kind: TruthKind,
    /// Absolute error estimate of a numeric value.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error_estimate: Option<f64>,
}

impl Truth {
    fn exact(value: f64) -> Self {
        Self {
            value,
            kind: TruthKind::Exact,
            error_estimate: None,
        }
    }

    /// Whether squared errors against this value are meaningful.
    pub fn is_point_value(&self) -> bool {
        self.kind != TruthKind::UpperBound
    }
}

/// Ground truth in nats.
pub fn ground_truth(spec: &ScenarioSpec, quantity: Quantity) -> Result<Truth> {
    let p = spec.resolved_param()?;
    let gaussian_mi = -0.5 * (1.0 - p * p).ln();
    let unsupported = || Err(Error::Unsupported(format!("no ground truth for the {quantity:?} of {}", spec.family)));
    match (spec.family, quantity) {
        (Family::GaussCorr2d, Quantity::Entropy) => Ok(Truth::exact(LOG_2PIE - gaussian_mi)),
        (Family::GaussBlock6d, Quantity::Entropy) => Ok(Truth::exact(3.0 * (LOG_2PIE - gaussian_mi))),
        (Family::GaussCorr2d | Family::GaussBlock6d, Quantity::MutualInformation) => Ok(Truth::exact(gaussian_mi)),
        (Family::GaussMixture, Quantity::Entropy) => Ok(Truth {
            value: std::f64::consts::LN_2 + LOG_2PIE - gaussian_mi,
            kind: TruthKind::UpperBound,
            error_estimate: None,
        }),
        (Family::GaussMixture, Quantity::MutualInformation) => unsupported(),
        // h(X, Y) = h(X) + h(U) with h(X) = 0
        (Family::NearFunctional(_) | Family::UniformAdditive, Quantity::Entropy) => Ok(Truth::exact(p.ln())),
        (Family::MultilinearUniform { .. }, Quantity::Entropy) => Ok(Truth::exact((2.0 * p).ln())),
        (Family::UniformAdditive, Quantity::MutualInformation) => Ok(Truth::exact(uniform_sum_mi(p))),
        (Family::NearFunctional(f), Quantity::MutualInformation) => Ok(additive_noise_mi(|t| f.cdf(t), &f.kinks(), p)),
        (Family::MultilinearUniform { terms, dims: 1 }, Quantity::MutualInformation) => {
            Ok(additive_noise_mi(|t| terms.cdf(t), &terms.kinks(), 2.0 * p))
        }
        (Family::MultilinearUniform { terms: Function::X, dims }, Quantity::MutualInformation) => {
            let kinks: Vec<f64> = (0..=dims).map(|k| k as f64).collect();
            Ok(additive_noise_mi(|t| irwin_hall_cdf(dims, t), &kinks, 2.0 * p))
        }
        (Family::MultilinearUniform { .. }, Quantity::MutualInformation) => unsupported(),
    }
}

/// `I(X; X + U)` for `X ~ U[0,1]`, `U ~ U[0,w]`.
pub fn uniform_sum_mi(w: f64) -> f64 {
    let (a, b) = if w <= 1.0 { (w, 1.0) } else { (1.0, w) };
    a / (2.0 * b) + b.ln() - w.ln()
}

fn irwin_hall_cdf(dims: usize, t: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    if t >= dims as f64 {
        return 1.0;
    }
    let mut binom = 1.0;
    let mut fact = 1.0;
    let mut acc = 0.0;
    for k in 0..=dims {
        if k > 0 {
            binom *= (dims + 1 - k) as f64 / k as f64;
        }
        if (k as f64) < t {
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            acc += sign * binom * (t - k as f64).powi(dims as i32);
        }
    }
    for i in 2..=dims {
        fact *= i as f64;
    }
    (acc / fact).clamp(0.0, 1.0)
}

fn xlogx(g: f64) -> f64 {
    if g > 0.0 {
        g * g.ln()
    } else {
        0.0
    }
}

/// `I(S; S + U)` with `U ~ U[0, w]` independent of `S`, given the CDF of
/// `S` and the values where it is not smooth. With `G(y) = P(y - w < S <= y)`
/// the density of `S + U` is `G / w`, so `I = -(1/w) * int G log G`.
fn additive_noise_mi<F: Fn(f64) -> f64>(cdf: F, kinks: &[f64], w: f64) -> Truth {
    let lo = kinks.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = kinks.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut cuts: Vec<f64> = kinks.iter().flat_map(|&k| [k, k + w]).collect();
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let g = |y: f64| xlogx(cdf(y) - cdf(y - w));
    let (mut integral, mut error) = (0.0, 0.0);
    for p in cuts.windows(2) {
        if p[1] <= p[0] || p[0] < lo || p[1] > hi + w {
            continue;
        }
        let out = quadrature::double_exponential::integrate(g, p[0], p[1], QUAD_TOLERANCE);
        integral += out.integral;
        error += out.error_estimate;
    }
    Truth {
        value: -integral / w,
        kind: TruthKind::Numeric,
        error_estimate: Some(error / w),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cdf_of_monotone_maps() {
        assert!((Function::X2.cdf(0.25) - 0.5).abs() < 1e-15);
        assert!((Function::Exp2.cdf(2f64.sqrt()) - 0.5).abs() < 1e-15);
        assert_eq!(Function::X3.cdf(-1.0), 0.0);
        assert_eq!(Function::X3.cdf(2.0), 1.0);
    }

    #[test]
    fn cdf_of_oscillating_maps() {
        // sin(4 pi x) <= 0 on half of [0, 1]
        assert!((Function::Sin4Pi.cdf(0.0) - 0.5).abs() < 1e-15);
        assert!((Function::Sin4Pi.cdf(1.0) - 1.0).abs() < 1e-15);
        let n = 200_000;
        for t in [-0.7, -0.2, 0.3, 0.9] {
            let count = (0..n).filter(|&i| Function::Cos5Pi.eval((i as f64 + 0.5) / n as f64) <= t).count();
            assert!((Function::Cos5Pi.cdf(t) - count as f64 / n as f64).abs() < 1e-4);
        }
    }

    #[test]
    fn irwin_hall_matches_small_cases() {
        assert!((irwin_hall_cdf(1, 0.3) - 0.3).abs() < 1e-15);
        assert!((irwin_hall_cdf(2, 1.5) - 0.875).abs() < 1e-15);
        assert!((irwin_hall_cdf(4, 2.0) - 0.5).abs() < 1e-14);
    }

    #[test]
    fn family_strings_round_trip() {
        for s in [
            "gauss-corr-2d",
            "gauss-block-6d",
            "gauss-mixture",
            "near-functional:cos",
            "uniform-additive",
            "multilinear-uniform:x2:4",
        ] {
            assert_eq!(s.parse::<Family>().unwrap().to_string(), s);
        }
        assert!("near-functional:tan".parse::<Family>().is_err());
        assert!("multilinear-uniform:sin:2".parse::<Family>().is_err());
    }
}
