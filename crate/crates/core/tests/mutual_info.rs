use klnn::entropy::{resolve_bias, BiasSource, Budget, EstimatorConfig, Support};
use klnn::mutual_info::{lnn_ksg_with_bandwidths, mi_3kl, mi_3lnn, mi_ksg, mi_lnn_ksg, CoupledMarginals, JointSample};
use klnn::neighbors::{NeighborIndex, PointCloud};
use klnn::rng::replica_rng;
use klnn::special::{digamma, unit_ball_volume};
use klnn::Error;
use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;

fn normal_cloud(n: usize, d: usize, seed: u64, stream: u64) -> PointCloud {
    let mut rng = replica_rng(seed, stream);
    PointCloud::new(n, d, (0..n * d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()).unwrap()
}

fn correlated(n: usize, r: f64, seed: u64) -> JointSample {
    let mut rng = replica_rng(seed, 0);
    let mut x = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let a: f64 = rng.sample(StandardNormal);
        let b: f64 = rng.sample(StandardNormal);
        x.push(a);
        y.push(r * a + (1.0 - r * r).sqrt() * b);
    }
    JointSample::new(PointCloud::from_scalars(&x).unwrap(), PointCloud::from_scalars(&y).unwrap()).unwrap()
}

fn pair(x: &[f64], y: &[f64]) -> JointSample {
    JointSample::new(PointCloud::from_scalars(x).unwrap(), PointCloud::from_scalars(y).unwrap()).unwrap()
}

fn cheb(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max)
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt()
}

fn naive_ksg(js: &JointSample, k: usize) -> f64 {
    let n = js.n();
    let joint = js.joint();
    let mut acc = 0.0;
    for i in 0..n {
        let mut dists: Vec<f64> = (0..n).filter(|&j| j != i).map(|j| cheb(joint.row(i), joint.row(j))).collect();
        dists.sort_by(f64::total_cmp);
        let rho = dists[k - 1];
        let nx = (0..n).filter(|&j| j != i && cheb(js.x().row(i), js.x().row(j)) < rho).count();
        let ny = (0..n).filter(|&j| j != i && cheb(js.y().row(i), js.y().row(j)) < rho).count();
        acc += digamma((nx + 1) as f64).unwrap() + digamma((ny + 1) as f64).unwrap();
    }
    digamma(k as f64).unwrap() + digamma(n as f64).unwrap() - acc / n as f64
}

fn naive_kl(cloud: &PointCloud, k: usize) -> f64 {
    let (n, d) = (cloud.n(), cloud.d());
    let mut acc = 0.0;
    for i in 0..n {
        let mut dists: Vec<f64> = (0..n).filter(|&j| j != i).map(|j| euclid(cloud.row(i), cloud.row(j))).collect();
        dists.sort_by(f64::total_cmp);
        acc += dists[k - 1].ln();
    }
    d as f64 * acc / n as f64 + unit_ball_volume(d).unwrap().ln() + (n as f64).ln() - digamma(k as f64).unwrap()
}

#[test]
fn ksg_hand_values() {
    // all marginal counts are zero: psi(3) - psi(1)
    let v = mi_ksg(&pair(&[0.0, 1.0, 3.0], &[0.0, 1.0, 3.0]), 1).unwrap().value;
    assert!((v - 1.5).abs() < 1e-12, "{v}");
    // counts (1,1), (1,0), (0,1)
    let v = mi_ksg(&pair(&[0.0, 1.0, 3.0], &[0.0, 3.0, 1.0]), 1).unwrap().value;
    assert!((v - 1.0 / 6.0).abs() < 1e-12, "{v}");
}

#[test]
fn small_samples_match_naive_oracles() {
    for seed in 0..20 {
        let n = 8 + (seed as usize % 13);
        let (dx, dy) = (1 + seed as usize % 2, 1 + (seed as usize / 2) % 2);
        let js = JointSample::new(normal_cloud(n, dx, seed, 1), normal_cloud(n, dy, seed, 2)).unwrap();
        for k in [1, 2, 3] {
            let ksg = mi_ksg(&js, k).unwrap().value;
            assert!((ksg - naive_ksg(&js, k)).abs() < 1e-10, "ksg seed {seed} k {k}");
            let kl = mi_3kl(&js, k).unwrap().value;
            let oracle = naive_kl(js.x(), k) + naive_kl(js.y(), k) - naive_kl(&js.joint(), k);
            assert!((kl - oracle).abs() < 1e-10, "3kl seed {seed} k {k}");
        }
    }
}

#[test]
fn swap_symmetry() {
    let js = correlated(300, 0.6, 3);
    let sw = js.swapped();
    let cfg = EstimatorConfig::new(5).bias(BiasSource::Constant(0.1));
    assert_eq!(mi_ksg(&js, 4).unwrap().value, mi_ksg(&sw, 4).unwrap().value);
    assert_eq!(mi_3kl(&js, 4).unwrap().value, mi_3kl(&sw, 4).unwrap().value);
    // the joint local moments see permuted coordinates, so only rounding differs
    assert!((mi_3lnn(&js, &cfg).unwrap().value - mi_3lnn(&sw, &cfg).unwrap().value).abs() < 1e-12);
    let m = CoupledMarginals::default();
    assert!((mi_lnn_ksg(&js, &cfg, &m).unwrap().value - mi_lnn_ksg(&sw, &cfg, &m).unwrap().value).abs() < 1e-12);

    let wide = JointSample::new(normal_cloud(200, 2, 4, 1), normal_cloud(200, 3, 4, 2)).unwrap();
    let sw = wide.swapped();
    assert_eq!(mi_ksg(&wide, 3).unwrap().value, mi_ksg(&sw, 3).unwrap().value);
    assert!((mi_3kl(&wide, 3).unwrap().value - mi_3kl(&sw, 3).unwrap().value).abs() < 1e-12);
}

#[test]
fn joint_translation_and_common_scaling() {
    let js = correlated(400, 0.5, 8);
    let moved = JointSample::new(js.x().translated(&[3.25]), js.y().translated(&[-17.5])).unwrap();
    assert!((mi_ksg(&js, 3).unwrap().value - mi_ksg(&moved, 3).unwrap().value).abs() < 1e-10);
    assert!((mi_3kl(&js, 3).unwrap().value - mi_3kl(&moved, 3).unwrap().value).abs() < 1e-10);
    let cfg = EstimatorConfig::new(5).bias(BiasSource::None);
    assert!((mi_3lnn(&js, &cfg).unwrap().value - mi_3lnn(&moved, &cfg).unwrap().value).abs() < 1e-9);

    let big = JointSample::new(js.x().scaled(4.0), js.y().scaled(4.0)).unwrap();
    assert_eq!(mi_ksg(&js, 3).unwrap().value, mi_ksg(&big, 3).unwrap().value);
    assert!((mi_3kl(&js, 3).unwrap().value - mi_3kl(&big, 3).unwrap().value).abs() < 1e-10);
    assert!((mi_3lnn(&js, &cfg).unwrap().value - mi_3lnn(&big, &cfg).unwrap().value).abs() < 1e-9);
}

#[test]
fn independent_samples_give_small_estimates() {
    let js = JointSample::new(normal_cloud(1000, 1, 11, 1), normal_cloud(1000, 1, 11, 2)).unwrap();
    let cfg = EstimatorConfig::new(5);
    for (name, v) in [
        ("ksg", mi_ksg(&js, 5).unwrap().value),
        ("3kl", mi_3kl(&js, 5).unwrap().value),
        ("3lnn", mi_3lnn(&js, &cfg).unwrap().value),
    ] {
        assert!(v.abs() < 0.1, "{name}: {v}");
    }
}

#[test]
fn correlated_gaussian_recovered() {
    let truth = -0.5 * (1.0 - 0.81f64).ln();
    let js = correlated(1000, 0.9, 12);
    let cfg = EstimatorConfig::new(5).budget(Budget::Auto { multiplier: 7.0 });
    for (name, v) in [
        ("ksg", mi_ksg(&js, 5).unwrap().value),
        ("3kl", mi_3kl(&js, 5).unwrap().value),
        ("3lnn", mi_3lnn(&js, &cfg).unwrap().value),
        ("lnn-ksg", mi_lnn_ksg(&js, &cfg, &CoupledMarginals::default()).unwrap().value),
    ] {
        assert!((v - truth).abs() < 0.15, "{name}: {v} vs {truth}");
    }
}

#[test]
fn net_bias_is_marginal_sum_minus_joint() {
    let js = correlated(200, 0.3, 13);
    let cfg = EstimatorConfig::new(5).budget(Budget::Fixed(30)).bias(BiasSource::Simulate {
        samples: 2000,
        seed: 4,
        form: Default::default(),
    });
    let report = mi_3lnn(&js, &cfg).unwrap();
    let b = |d| resolve_bias(&cfg.bias, 5, d, 30, cfg.clamp).unwrap().0;
    assert_eq!(report.bias, b(1) + b(1) - b(2));
    let unbiased = mi_3lnn(&js, &cfg.clone().bias(BiasSource::None)).unwrap();
    assert!((unbiased.value - report.bias - report.value).abs() < 1e-12);
}

#[test]
fn marginal_bandwidths_reduce_to_three_term() {
    let js = JointSample::new(normal_cloud(150, 1, 14, 1), normal_cloud(150, 2, 14, 2)).unwrap();
    let cfg = EstimatorConfig::new(4).budget(Budget::Fixed(20)).bias(BiasSource::Constant(-0.05));
    let bx = NeighborIndex::build(js.x().clone()).kth_distances(4).unwrap();
    let by = NeighborIndex::build(js.y().clone()).kth_distances(4).unwrap();
    let marginals = CoupledMarginals {
        bias: cfg.bias.clone(),
        support: Support::Nearest,
    };
    let reduced = lnn_ksg_with_bandwidths(&js, &cfg, &marginals, &bx, &by).unwrap();
    assert_eq!(reduced.value, mi_3lnn(&js, &cfg).unwrap().value);
}

#[test]
fn duplicated_variable() {
    let x = normal_cloud(300, 1, 15, 1);
    let js = JointSample::new(x.clone(), x.clone()).unwrap();
    let kl = mi_3kl(&js, 3).unwrap();
    assert!(kl.value.is_finite() && kl.value > 1.0);
    assert!(mi_ksg(&js, 3).unwrap().value.is_finite());

    let mut rows: Vec<[f64; 1]> = x.rows().map(|r| [r[0]]).collect();
    rows[1] = rows[0];
    let dup = PointCloud::from_rows(&rows).unwrap();
    let js = JointSample::new(dup.clone(), dup).unwrap();
    let err = mi_lnn_ksg(&js, &EstimatorConfig::new(1).bias(BiasSource::None), &CoupledMarginals::default());
    assert!(matches!(err, Err(Error::DegenerateBandwidth(_)) | Err(Error::InvalidArgument(_))));
}

#[test]
fn too_few_samples_rejected() {
    let js = pair(&[0.0, 1.0, 2.0], &[1.0, 0.0, 2.0]);
    assert!(mi_ksg(&js, 3).is_err());
    assert!(mi_3kl(&js, 0).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn ksg_sample_order_invariant(seed in 0u64..1000, n in 12usize..60) {
        let js = JointSample::new(normal_cloud(n, 1, seed, 1), normal_cloud(n, 2, seed, 2)).unwrap();
        let perm: Vec<usize> = (0..n).rev().collect();
        let p = JointSample::new(js.x().permuted(&perm), js.y().permuted(&perm)).unwrap();
        let a = mi_ksg(&js, 3).unwrap().value;
        let b = mi_ksg(&p, 3).unwrap().value;
        prop_assert!((a - b).abs() < 1e-12);
    }
}
