//! Mutual information estimators built from k-NN entropy estimates.

use serde::{Deserialize, Serialize};

use crate::entropy::{entropy_kl, entropy_klnn, entropy_lnn_coupled, BiasSource, EstimatorConfig, Support};
use crate::error::{Error, Result};
use crate::exec::map_range;
use crate::neighbors::{coupled_radii, Metric, NeighborIndex, PointCloud};
use crate::special::{digamma, digamma_count};

/// Paired samples `(X_i, Y_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct JointSample {
    x: PointCloud,
    y: PointCloud,
}

impl JointSample {
    pub fn new(x: PointCloud, y: PointCloud) -> Result<Self> {
        if x.n() != y.n() {
            return Err(Error::InvalidArgument(format!(
                "X has {} samples but Y has {}",
                x.n(),
                y.n()
            )));
        }
        Ok(Self { x, y })
    }

    /// Splits the columns of `joint` after the first `dx`.
    pub fn split(joint: &PointCloud, dx: usize) -> Result<Self> {
        Self::new(joint.columns(0..dx)?, joint.columns(dx..joint.d())?)
    }

    pub fn x(&self) -> &PointCloud {
        &self.x
    }

    pub fn y(&self) -> &PointCloud {
        &self.y
    }

    pub fn n(&self) -> usize {
        self.x.n()
    }

    pub fn joint(&self) -> PointCloud {
        self.x.concat(&self.y).expect("sample counts checked at construction")
    }

    pub fn swapped(&self) -> Self {
        Self {
            x: self.y.clone(),
            y: self.x.clone(),
        }
    }
}

/// Result of a mutual information estimate, in nats.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiReport {
    pub estimator: String,
    pub value: f64,
    pub n: usize,
    pub dx: usize,
    pub dy: usize,
    pub k: usize,
    /// Metric of the joint-space neighbor search.
    pub joint_metric: Metric,
    /// Metric of the marginal-space neighbor search.
    pub marginal_metric: Metric,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub h_x: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub h_y: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub h_xy: Option<f64>,
    /// Net bias removed: `B_x + B_y - B_xy`.
    pub bias: f64,
}

impl MiReport {
    pub fn bits(&self) -> f64 {
        self.value / std::f64::consts::LN_2
    }
}

fn check_n(js: &JointSample, k: usize) -> Result<()> {
    if k == 0 || js.n() < k + 1 {
        return Err(Error::InvalidArgument(format!(
            "need 1 <= k < n, got k = {k}, n = {}",
            js.n()
        )));
    }
    Ok(())
}

fn three_term(name: &str, js: &JointSample, k: usize, metric: Metric, h: [(f64, f64); 3]) -> MiReport {
    let [(hx, bx), (hy, by), (hxy, bxy)] = h;
    MiReport {
        estimator: name.to_string(),
        value: hx + hy - hxy,
        n: js.n(),
        dx: js.x.d(),
        dy: js.y.d(),
        k,
        joint_metric: metric,
        marginal_metric: metric,
        h_x: Some(hx),
        h_y: Some(hy),
        h_xy: Some(hxy),
        bias: bx + by - bxy,
    }
}

/// `H_KL(X) + H_KL(Y) - H_KL(X, Y)`
pub fn mi_3kl(js: &JointSample, k: usize) -> Result<MiReport> {
    check_n(js, k)?;
    let hx = entropy_kl(&js.x, k)?;
    let hy = entropy_kl(&js.y, k)?;
    let hxy = entropy_kl(&js.joint(), k)?;
    Ok(three_term(
        "3kl",
        js,
        k,
        Metric::Euclidean,
        [(hx.value, hx.bias), (hy.value, hy.bias), (hxy.value, hxy.bias)],
    ))
}

/// Kraskov-Stogbauer-Grassberger estimator (first variant): joint radius in
/// the max norm, strict marginal counts in the max norm.
pub fn mi_ksg(js: &JointSample, k: usize) -> Result<MiReport> {
    check_n(js, k)?;
    let n = js.n();
    let joint = NeighborIndex::with_metric(js.joint(), Metric::Chebyshev);
    let radii = joint.kth_distances(k)?;
    let ix = NeighborIndex::with_metric(js.x.clone(), Metric::Chebyshev);
    let iy = NeighborIndex::with_metric(js.y.clone(), Metric::Chebyshev);
    let terms = map_range(n, |i| {
        let nx = ix.count_within_strict(i, radii[i]);
        let ny = iy.count_within_strict(i, radii[i]);
        digamma_count(nx + 1) + digamma_count(ny + 1)
    });
    let mean = terms.iter().sum::<f64>() / n as f64;
    Ok(MiReport {
        estimator: "ksg".into(),
        value: digamma(k as f64)? + digamma(n as f64)? - mean,
        n,
        dx: js.x.d(),
        dy: js.y.d(),
        k,
        joint_metric: Metric::Chebyshev,
        marginal_metric: Metric::Chebyshev,
        h_x: None,
        h_y: None,
        h_xy: None,
        bias: 0.0,
    })
}

/// `H_kLNN(X) + H_kLNN(Y) - H_kLNN(X, Y)`, each with its own neighbors and
/// bias constant.
pub fn mi_3lnn(js: &JointSample, cfg: &EstimatorConfig) -> Result<MiReport> {
    check_n(js, cfg.k)?;
    let hx = entropy_klnn(&js.x, cfg)?;
    let hy = entropy_klnn(&js.y, cfg)?;
    let hxy = entropy_klnn(&js.joint(), cfg)?;
    Ok(three_term(
        "3lnn",
        js,
        cfg.k,
        Metric::Euclidean,
        [(hx.value, hx.bias), (hy.value, hy.bias), (hxy.value, hxy.bias)],
    ))
}

/// Marginal settings of [`mi_lnn_ksg`].
#[derive(Debug, Clone, PartialEq)]
pub struct CoupledMarginals {
    pub bias: BiasSource,
    pub support: Support,
}

impl Default for CoupledMarginals {
    fn default() -> Self {
        Self {
            bias: BiasSource::None,
            support: Support::Kernel,
        }
    }
}

/// k-LNN joint entropy with marginal entropies evaluated at the joint-space
/// `k`-NN radii (Euclidean).
pub fn mi_lnn_ksg(js: &JointSample, cfg: &EstimatorConfig, marginals: &CoupledMarginals) -> Result<MiReport> {
    check_n(js, cfg.k)?;
    let joint = js.joint();
    let radii = coupled_radii(&NeighborIndex::build(joint.clone()), cfg.k)?;
    if let Some(i) = radii.iter().position(|&r| r <= 0.0) {
        return Err(Error::DegenerateBandwidth(format!(
            "joint k-NN distance is zero at sample {i} (duplicate samples?)"
        )));
    }
    lnn_ksg_with_bandwidths(js, cfg, marginals, &radii, &radii)
}

/// [`mi_lnn_ksg`] with explicit marginal bandwidths.
pub fn lnn_ksg_with_bandwidths(
    js: &JointSample,
    cfg: &EstimatorConfig,
    marginals: &CoupledMarginals,
    bandwidths_x: &[f64],
    bandwidths_y: &[f64],
) -> Result<MiReport> {
    check_n(js, cfg.k)?;
    let hxy = entropy_klnn(&js.joint(), cfg)?;
    let marginal_cfg = cfg.clone().bias(marginals.bias.clone()).support(marginals.support);
    let hx = entropy_lnn_coupled(&js.x, bandwidths_x, &marginal_cfg)?;
    let hy = entropy_lnn_coupled(&js.y, bandwidths_y, &marginal_cfg)?;
    Ok(three_term(
        "lnn-ksg",
        js,
        cfg.k,
        Metric::Euclidean,
        [(hx.value, hx.bias), (hy.value, hy.bias), (hxy.value, hxy.bias)],
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mismatched_lengths_rejected() {
        let x = PointCloud::from_scalars(&[0.0, 1.0]).unwrap();
        let y = PointCloud::from_scalars(&[0.0, 1.0, 2.0]).unwrap();
        assert!(JointSample::new(x, y).is_err());
    }

    #[test]
    fn split_round_trips_joint() {
        let joint = PointCloud::from_rows(&[[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]).unwrap();
        let js = JointSample::split(&joint, 1).unwrap();
        assert_eq!(js.x().d(), 1);
        assert_eq!(js.y().d(), 2);
        assert_eq!(js.joint(), joint);
    }
}
