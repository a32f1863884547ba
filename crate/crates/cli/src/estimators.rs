use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use klnn::entropy::{entropy_kde, entropy_kl, entropy_klnn, BiasSource, Budget, EstimateReport, EstimatorConfig, KdeBandwidth};
use klnn::mutual_info::{mi_3kl, mi_3lnn, mi_ksg, mi_lnn_ksg, CoupledMarginals, JointSample, MiReport};
use klnn::neighbors::PointCloud;
use klnn::synth::Quantity;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Estimator {
    Kl,
    Klnn,
    Kde,
    ThreeKl,
    Ksg,
    ThreeLnn,
    LnnKsg,
}

impl Estimator {
    pub const ALL: [Estimator; 7] = [
        Estimator::Kl,
        Estimator::Klnn,
        Estimator::Kde,
        Estimator::ThreeKl,
        Estimator::Ksg,
        Estimator::ThreeLnn,
        Estimator::LnnKsg,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Estimator::Kl => "kl",
            Estimator::Klnn => "klnn",
            Estimator::Kde => "kde",
            Estimator::ThreeKl => "3kl",
            Estimator::Ksg => "ksg",
            Estimator::ThreeLnn => "3lnn",
            Estimator::LnnKsg => "lnn-ksg",
        }
    }

    pub fn quantity(self) -> Quantity {
        match self {
            Estimator::Kl | Estimator::Klnn | Estimator::Kde => Quantity::Entropy,
            _ => Quantity::MutualInformation,
        }
    }

    /// Runs the estimator on `cloud`; MI estimators split it after the
    /// first `dims_x` columns.
    pub fn estimate(self, cloud: &PointCloud, dims_x: usize, s: &Settings) -> klnn::Result<Report> {
        let cfg = EstimatorConfig::new(s.k).budget(s.budget).bias(s.bias.clone());
        let mi = || {
            if dims_x == 0 || dims_x >= cloud.d() {
                return Err(klnn::Error::InvalidArgument(format!(
                    "dims-x = {dims_x} must leave at least one column on each side of {}",
                    cloud.d()
                )));
            }
            JointSample::split(cloud, dims_x)
        };
        Ok(match self {
            Estimator::Kl => Report::Entropy(entropy_kl(cloud, s.k)?),
            Estimator::Klnn => Report::Entropy(entropy_klnn(cloud, &cfg)?),
            Estimator::Kde => Report::Entropy(entropy_kde(cloud, s.kde)?),
            Estimator::ThreeKl => Report::Mi(mi_3kl(&mi()?, s.k)?),
            Estimator::Ksg => Report::Mi(mi_ksg(&mi()?, s.k)?),
            Estimator::ThreeLnn => Report::Mi(mi_3lnn(&mi()?, &cfg)?),
            Estimator::LnnKsg => Report::Mi(mi_lnn_ksg(&mi()?, &cfg, &CoupledMarginals::default())?),
        })
    }
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Estimator {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Estimator::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| format!("unknown estimator '{s}' (expected kl, klnn, kde, 3kl, ksg, 3lnn or lnn-ksg)"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub k: usize,
    pub budget: Budget,
    pub bias: BiasSource,
    pub kde: KdeBandwidth,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Report {
    Entropy(EstimateReport),
    Mi(MiReport),
}

impl Report {
    pub fn value(&self) -> f64 {
        match self {
            Report::Entropy(r) => r.value,
            Report::Mi(r) => r.value,
        }
    }
}
