//! Special functions and geometric constants.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Euler–Mascheroni constant.
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Volume of the unit Euclidean ball in `d` dimensions, `pi^(d/2) / Gamma(d/2 + 1)`.
pub fn unit_ball_volume(d: usize) -> Result<f64> {
    if d == 0 {
        return Err(Error::InvalidArgument("dimension must be >= 1".into()));
    }
    Ok(PI.powf(d as f64 / 2.0) / gamma_half_integer(d + 2))
}

/// `Gamma(m / 2)` for a positive integer `m`, by exact products.
fn gamma_half_integer(m: usize) -> f64 {
    debug_assert!(m >= 1);
    if m.is_multiple_of(2) {
        // (m/2 - 1)!
        (1..m / 2).map(|j| j as f64).product()
    } else {
        // sqrt(pi) * prod_{j=0}^{(m-3)/2} (j + 1/2)
        let steps = (m - 1) / 2;
        PI.sqrt() * (0..steps).map(|j| j as f64 + 0.5).product::<f64>()
    }
}

// Bernoulli-number coefficients B_{2n} / (2n) for n = 1..7.
const ASYMPTOTIC: [f64; 7] = [
    1.0 / 12.0,
    -1.0 / 120.0,
    1.0 / 252.0,
    -1.0 / 240.0,
    1.0 / 132.0,
    -691.0 / 32760.0,
    1.0 / 12.0,
];

/// Digamma function `psi(x)` for `x > 0`.
///
/// Shifts the argument up with `psi(x) = psi(x + 1) - 1/x` until `x >= 10`,
/// then evaluates the asymptotic expansion through the `x^-14` term.
pub fn digamma(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "digamma requires a finite positive argument, got {x}"
        )));
    }
    let mut x = x;
    let mut shift = 0.0;
    while x < 10.0 {
        shift -= 1.0 / x;
        x += 1.0;
    }
    let inv2 = 1.0 / (x * x);
    // Horner in 1/x^2: sum_n B_{2n}/(2n) x^{-2n}
    let mut series = 0.0;
    for c in ASYMPTOTIC.iter().rev() {
        series = (series + c) * inv2;
    }
    Ok(shift + x.ln() - 0.5 / x - series)
}

/// Digamma at a positive integer argument, used in hot loops where the
/// argument is known valid.
pub(crate) fn digamma_count(n: usize) -> f64 {
    digamma(n as f64).expect("positive integer argument")
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    // Reference values from a 40-digit arbitrary precision evaluation.
    const PSI_REFERENCE: [(f64, f64); 14] = [
        (0.1, -10.423_754_940_411_076),
        (0.5, -1.963_510_026_021_423_5),
        (1.0, -0.577_215_664_901_532_9),
        (1.5, 0.036_489_973_978_576_52),
        (2.0, 0.422_784_335_098_467_14),
        (2.5, 0.703_156_640_645_243_2),
        (3.0, 0.922_784_335_098_467_1),
        (5.5, 1.611_093_148_581_751_1),
        (6.0, 1.706_117_668_431_800_5),
        (10.0, 2.251_752_589_066_721),
        (30.0, 3.384_438_132_685_525),
        (100.0, 4.600_161_852_738_087),
        (1000.0, 6.907_255_195_648_812),
        (1.0e6, 13.815_510_057_964_19),
    ];

    #[test]
    fn digamma_matches_high_precision_reference() {
        for (x, expected) in PSI_REFERENCE {
            let got = digamma(x).unwrap();
            // absolute floor covers the zero of psi near 1.4616
            assert!((got - expected).abs() <= 1e-12 * expected.abs() + 1e-13, "psi({x}) = {got}");
        }
    }

    #[test]
    fn digamma_recurrence() {
        for x in [0.5, 1.0, 2.5, 10.0] {
            let r = digamma(x + 1.0).unwrap() - digamma(x).unwrap() - 1.0 / x;
            assert!(r.abs() < 1e-12, "x = {x}: residual {r}");
        }
    }

    #[test]
    fn digamma_large_argument_asymptotics() {
        let x: f64 = 1000.0;
        let approx = x.ln() - 1.0 / (2.0 * x);
        assert!((digamma(x).unwrap() - approx).abs() < 1e-6);
    }

    #[test]
    fn digamma_rejects_nonpositive() {
        assert!(digamma(0.0).is_err());
        assert!(digamma(-1.5).is_err());
        assert!(digamma(f64::NAN).is_err());
    }

    #[test]
    fn ball_volume_small_dimensions() {
        assert_relative_eq!(unit_ball_volume(1).unwrap(), 2.0, max_relative = 1e-15);
        assert_relative_eq!(unit_ball_volume(2).unwrap(), PI, max_relative = 1e-15);
        assert_relative_eq!(unit_ball_volume(3).unwrap(), 4.0 * PI / 3.0, max_relative = 1e-15);
        assert!(unit_ball_volume(0).is_err());
    }

    #[test]
    fn ball_volume_recurrence() {
        for d in 3..=16 {
            let lhs = unit_ball_volume(d).unwrap();
            let rhs = unit_ball_volume(d - 2).unwrap() * 2.0 * PI / d as f64;
            assert_relative_eq!(lhs, rhs, max_relative = 1e-12);
        }
    }
}
