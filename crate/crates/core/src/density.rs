//! Closed-form local likelihood density estimates with a Gaussian kernel.
//!
//! For a query point `x`, bandwidth `h` and contributor set `T`, the
//! kernel-weighted moments are
//!
//! ```text
//! w_j = exp(-|X_j - x|^2 / 2h^2)
//! S0  = sum w_j
//! S1  = sum (X_j - x)/h w_j
//! S2  = sum (X_j - x)(X_j - x)^T/h^2 w_j
//! Sigma = S2/S0 - (S1/S0)(S1/S0)^T
//! ```
//!
//! and the local fits of degree 0, 1, 2 have the densities
//!
//! ```text
//! p0: S0 / (n (2 pi)^{d/2} h^d)
//! p1: p0 * exp(-|S1|^2 / 2 S0^2)
//! p2: p0 * |Sigma|^{-1/2} exp(-S1^T Sigma^{-1} S1 / 2 S0^2)
//! ```

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{det_inv_sym_with_floor, dot, scale_floor, SmallMatrix};
use crate::neighbors::PointCloud;
use crate::special::unit_ball_volume;

/// Kernel-weighted moments around a query point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalMoments {
    pub h: f64,
    /// Sample count used in the density normalization.
    pub n: usize,
    pub s0: f64,
    pub s1: Vec<f64>,
    pub s2: SmallMatrix,
    pub sigma: SmallMatrix,
}

impl LocalMoments {
    pub fn dim(&self) -> usize {
        self.s1.len()
    }

    /// Determinant floor for `Sigma`, relative to the scale of `S2/S0`.
    ///
    /// `Sigma` is a difference of two terms of that scale, so a nearly
    /// rank-deficient `Sigma` leaves roundoff residue of order `eps * S2/S0`
    /// that a floor relative to `Sigma` itself would accept.
    pub fn sigma_floor(&self) -> f64 {
        scale_floor(self.s2.trace() / self.s0, self.dim())
    }

    /// `log(S0 / (n (2 pi)^{d/2} h^d))`
    pub fn log_p0(&self) -> f64 {
        let d = self.dim() as f64;
        self.s0.ln() - (self.n as f64).ln() - 0.5 * d * (2.0 * PI).ln() - d * self.h.ln()
    }
}

/// Which samples enter the moment sums.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Contributors<'a> {
    All,
    /// Every sample except one, for resubstitution at a sample.
    AllExcept(usize),
    Indices(&'a [usize]),
}

/// Fitted local polynomial `a0 + a1^T u + u^T a2 u` of the log density.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LldeParams {
    pub a0: f64,
    pub a1: Vec<f64>,
    pub a2: SmallMatrix,
}

/// Degree of the local polynomial.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Degree {
    P0,
    P1,
    P2,
}

impl Degree {
    pub fn from_index(p: usize) -> Result<Self> {
        match p {
            0 => Ok(Degree::P0),
            1 => Ok(Degree::P1),
            2 => Ok(Degree::P2),
            _ => Err(Error::Unsupported(format!(
                "local likelihood degree {p} has no closed form (use 0, 1 or 2)"
            ))),
        }
    }

    pub fn index(self) -> usize {
        match self {
            Degree::P0 => 0,
            Degree::P1 => 1,
            Degree::P2 => 2,
        }
    }
}

/// What to do when `Sigma` is singular in a degree-2 fit.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SigmaPolicy {
    Error,
    #[default]
    FallbackP1,
    Skip,
}

/// Degree-2 log density after applying a [`SigmaPolicy`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PolicyOutcome {
    Value(f64),
    /// Degree-1 value used in place of a singular degree-2 fit.
    Fallback(f64),
    Skipped,
}

fn check_bandwidth(h: f64) -> Result<()> {
    if h > 0.0 && h.is_finite() {
        Ok(())
    } else {
        Err(Error::DegenerateBandwidth(format!(
            "bandwidth must be finite and positive, got {h}"
        )))
    }
}

fn accumulate(acc: &mut (f64, Vec<f64>, SmallMatrix), u: &mut [f64], point: &[f64], center: &[f64], h: f64) {
    let mut r2 = 0.0;
    for ((uc, p), c) in u.iter_mut().zip(point).zip(center) {
        *uc = (p - c) / h;
        r2 += *uc * *uc;
    }
    let w = (-0.5 * r2).exp();
    acc.0 += w;
    for (s, uc) in acc.1.iter_mut().zip(u.iter()) {
        *s += uc * w;
    }
    acc.2.add_outer(u, w);
}

/// Moments of the contributors around `center` with bandwidth `h`.
pub fn local_moments(
    cloud: &PointCloud,
    center: &[f64],
    h: f64,
    contributors: Contributors<'_>,
) -> Result<LocalMoments> {
    let d = cloud.d();
    if center.len() != d {
        return Err(Error::InvalidArgument(format!(
            "query point has dimension {}, cloud has {d}",
            center.len()
        )));
    }
    check_bandwidth(h)?;
    let mut acc = (0.0, vec![0.0; d], SmallMatrix::zeros(d));
    let mut u = vec![0.0; d];
    let mut used = 0usize;
    match contributors {
        Contributors::All | Contributors::AllExcept(_) => {
            let skip = match contributors {
                Contributors::AllExcept(i) => Some(i),
                _ => None,
            };
            for j in 0..cloud.n() {
                if Some(j) != skip {
                    accumulate(&mut acc, &mut u, cloud.row(j), center, h);
                    used += 1;
                }
            }
        }
        Contributors::Indices(idx) => {
            for &j in idx {
                if j >= cloud.n() {
                    return Err(Error::InvalidArgument(format!(
                        "contributor index {j} out of range for n = {}",
                        cloud.n()
                    )));
                }
                accumulate(&mut acc, &mut u, cloud.row(j), center, h);
                used += 1;
            }
        }
    }
    if used == 0 {
        return Err(Error::EmptyNeighborhood("no contributing samples".into()));
    }
    Ok(finish_moments(h, cloud.n(), acc.0, acc.1, acc.2))
}

/// Builds [`LocalMoments`] from raw sums, deriving `Sigma`.
pub fn finish_moments(h: f64, n: usize, s0: f64, s1: Vec<f64>, s2: SmallMatrix) -> LocalMoments {
    let d = s1.len();
    let mut sigma = SmallMatrix::zeros(d);
    if s0 > 0.0 {
        for a in 0..d {
            for b in 0..d {
                sigma[(a, b)] = s2[(a, b)] / s0 - (s1[a] / s0) * (s1[b] / s0);
            }
        }
    }
    LocalMoments {
        h,
        n,
        s0,
        s1,
        s2,
        sigma,
    }
}

fn require_mass(m: &LocalMoments) -> Result<()> {
    if m.s0 > 0.0 && m.s0.is_finite() {
        Ok(())
    } else {
        Err(Error::EmptyNeighborhood(format!(
            "kernel mass S0 = {} at bandwidth {}",
            m.s0, m.h
        )))
    }
}

/// Kernel density estimate at `x`; `exclude` drops one sample from the sum
/// while keeping the `1/n` normalization.
pub fn kde_p0(cloud: &PointCloud, x: &[f64], h: f64, exclude: Option<usize>) -> Result<f64> {
    let contributors = match exclude {
        Some(i) => Contributors::AllExcept(i),
        None => Contributors::All,
    };
    if cloud.n() == 1 && exclude.is_some() {
        return Err(Error::EmptyNeighborhood("single sample excluded from its own estimate".into()));
    }
    let m = local_moments(cloud, x, h, contributors)?;
    Ok(m.log_p0().exp())
}

/// `k / (n c_d rho^d)`
pub fn knn_density(rho_k: f64, k: usize, n: usize, d: usize) -> Result<f64> {
    if !(rho_k > 0.0) || !rho_k.is_finite() {
        return Err(Error::DegenerateBandwidth(format!(
            "k-NN distance must be positive, got {rho_k}"
        )));
    }
    if k == 0 || n == 0 {
        return Err(Error::InvalidArgument("k and n must be >= 1".into()));
    }
    Ok(k as f64 / (n as f64 * unit_ball_volume(d)? * rho_k.powi(d as i32)))
}

pub fn log_llde_p0(m: &LocalMoments) -> Result<f64> {
    require_mass(m)?;
    Ok(m.log_p0())
}

pub fn log_llde_p1(m: &LocalMoments) -> Result<f64> {
    require_mass(m)?;
    let mean_shift2 = dot(&m.s1, &m.s1) / (m.s0 * m.s0);
    Ok(m.log_p0() - 0.5 * mean_shift2)
}

pub fn llde_p1(m: &LocalMoments) -> Result<f64> {
    log_llde_p1(m).map(f64::exp)
}

/// `Sigma^{-1}` and `|Sigma|`, or [`Error::SingularSigma`].
pub fn sigma_inverse(m: &LocalMoments) -> Result<(f64, SmallMatrix)> {
    require_mass(m)?;
    match det_inv_sym_with_floor(&m.sigma, m.sigma_floor()) {
        Ok((det, _)) if det <= 0.0 => Err(Error::SingularSigma { det }),
        Ok(pair) => Ok(pair),
        Err(Error::SingularMatrix { det }) => Err(Error::SingularSigma { det }),
        Err(e) => Err(e),
    }
}

pub fn log_llde_p2(m: &LocalMoments) -> Result<f64> {
    let (det, inv) = sigma_inverse(m)?;
    let q = inv.quad_form(&m.s1) / (m.s0 * m.s0);
    Ok(m.log_p0() - 0.5 * det.ln() - 0.5 * q)
}

pub fn llde_p2(m: &LocalMoments) -> Result<f64> {
    log_llde_p2(m).map(f64::exp)
}

/// Log density of the requested degree.
pub fn log_llde(m: &LocalMoments, degree: Degree) -> Result<f64> {
    match degree {
        Degree::P0 => log_llde_p0(m),
        Degree::P1 => log_llde_p1(m),
        Degree::P2 => log_llde_p2(m),
    }
}

/// Degree-2 log density, resolving a singular `Sigma` according to `policy`.
pub fn log_llde_p2_with_policy(m: &LocalMoments, policy: SigmaPolicy) -> Result<PolicyOutcome> {
    match log_llde_p2(m) {
        Ok(v) => Ok(PolicyOutcome::Value(v)),
        Err(Error::SingularSigma { det }) => match policy {
            SigmaPolicy::Error => Err(Error::SingularSigma { det }),
            SigmaPolicy::FallbackP1 => log_llde_p1(m).map(PolicyOutcome::Fallback),
            SigmaPolicy::Skip => Ok(PolicyOutcome::Skipped),
        },
        Err(e) => Err(e),
    }
}

/// Recovers the degree-2 local polynomial from its moments.
pub fn recover_params_p2(m: &LocalMoments) -> Result<LldeParams> {
    let d = m.dim();
    let (_, sigma_inv) = sigma_inverse(m).map_err(|e| Error::RecoveryFailure(e.to_string()))?;
    let h = m.h;
    // M = (h^2 Sigma)^{-1}
    let big_m = sigma_inv.scaled(1.0 / (h * h));
    if big_m.cholesky().is_err() {
        return Err(Error::RecoveryFailure(
            "recovered M is not positive definite".into(),
        ));
    }
    let a1: Vec<f64> = sigma_inv
        .mul_vec(&m.s1)
        .into_iter()
        .map(|v| v / (h * m.s0))
        .collect();
    let a2 = SmallMatrix::identity(d)
        .scaled(1.0 / (h * h))
        .add_scaled(&big_m, -1.0)
        .scaled(0.5);
    let a0 = log_llde_p2(m).map_err(|e| Error::RecoveryFailure(e.to_string()))?;
    Ok(LldeParams { a0, a1, a2 })
}

/// `M = h^-2 I - 2 a2`
pub fn precision_matrix(params: &LldeParams, h: f64) -> SmallMatrix {
    let d = params.a1.len();
    SmallMatrix::identity(d)
        .scaled(1.0 / (h * h))
        .add_scaled(&params.a2, -2.0)
}

/// Residuals of the three stationarity equations of the local likelihood.
///
/// Each compares a sample moment (`S_alpha / n`) with the Gaussian integral
/// of the same moment under the fitted local density. The integral is
/// evaluated in closed form from `params`, so the residuals react to every
/// parameter independently. The second-order residual is a Frobenius norm.
pub fn verify_stationarity(params: &LldeParams, m: &LocalMoments) -> Result<[f64; 3]> {
    let d = m.dim();
    let h = m.h;
    let n = m.n as f64;
    let big_m = precision_matrix(params, h);
    let (det_m, m_inv) = crate::linalg::det_inv_sym(&big_m)?;
    if det_m <= 0.0 {
        return Err(Error::RecoveryFailure("M is not positive definite".into()));
    }
    let shift = m_inv.mul_vec(&params.a1);
    let i0 = (2.0 * PI).powf(d as f64 / 2.0)
        * det_m.powf(-0.5)
        * (params.a0 + 0.5 * dot(&params.a1, &shift)).exp();
    let r0 = (m.s0 / n - i0).abs();
    let r1 = m
        .s1
        .iter()
        .zip(&shift)
        .map(|(s, v)| (s / n - i0 * v / h).powi(2))
        .sum::<f64>()
        .sqrt();
    let mut r2 = 0.0;
    for a in 0..d {
        for b in 0..d {
            let rhs = i0 * (m_inv[(a, b)] + shift[a] * shift[b]) / (h * h);
            r2 += (m.s2[(a, b)] / n - rhs).powi(2);
        }
    }
    Ok([r0, r1, r2.sqrt()])
}

/// Largest radius, in bandwidth units, at which a kernel weight is still
/// above `1e-12`: `sqrt(2 ln 1e12)`.
pub const KERNEL_SUPPORT: f64 = 7.433_844_377_699_677;
