//! Finite-blocklength rate: Gaussian tail function, its inverse, and the
//! normal-approximation bit count with unit dispersion.

use std::f64::consts::{LN_2, SQRT_2};

use crate::error::{Error, Result};
use crate::model::ScenarioConfig;

/// Per-robot `Q^-1(eps_k)`, computed once per scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct RateContext {
    pub qinv: Vec<f64>,
    /// Diagnostic switch: evaluate with the exact dispersion `1 - (1 + snr)^-2`.
    pub use_exact_dispersion: bool,
}

impl RateContext {
    pub fn new(error_prob: &[f64]) -> Result<Self> {
        let qinv = error_prob.iter().map(|&e| q_inv(e)).collect::<Result<_>>()?;
        Ok(RateContext {
            qinv,
            use_exact_dispersion: false,
        })
    }

    pub fn from_config(config: &ScenarioConfig) -> Result<Self> {
        Self::new(&config.error_prob)
    }

    pub fn bits(&self, robot: usize, phi: &[f64], snr: &[f64]) -> Result<f64> {
        if self.use_exact_dispersion {
            exact_dispersion_bits(phi, snr, self.qinv[robot])
        } else {
            achievable_bits(phi, snr, self.qinv[robot])
        }
    }
}

/// Standard normal tail probability `P(X > x)`.
pub fn q_func(x: f64) -> f64 {
    0.5 * libm::erfc(x / SQRT_2)
}

fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Inverse of [`q_func`] by safeguarded Newton iteration on `ln Q(x) - ln eps`
/// inside a shrinking bracket.
pub fn q_inv(eps: f64) -> Result<f64> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::ProbabilityOutOfRange(eps));
    }
    let target = eps.ln();
    // Q(-38) rounds to 1 and Q(38) is below the smallest normal double.
    let (mut lo, mut hi) = (-38.0_f64, 38.0_f64);
    let mut x = 0.0;
    for _ in 0..200 {
        let q = q_func(x);
        let resid = q.ln() - target;
        if resid > 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        if resid == 0.0 {
            return Ok(x);
        }
        // d/dx ln Q(x) = -pdf(x) / Q(x)
        let slope = -std_normal_pdf(x) / q;
        let mut next = x - resid / slope;
        if !next.is_finite() || next <= lo || next >= hi {
            next = 0.5 * (lo + hi);
        }
        if (next - x).abs() <= 1e-15 * x.abs().max(1.0) {
            return Ok(next);
        }
        x = next;
    }
    Ok(x)
}

fn check_inputs(phi: &[f64], snr: &[f64]) -> Result<()> {
    if phi.len() != snr.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} allocation entries vs {} SNR entries",
            phi.len(),
            snr.len()
        )));
    }
    for &v in phi {
        if !(v >= 0.0 && v.is_finite()) {
            return Err(Error::NegativeEntry {
                what: "allocation",
                value: v,
            });
        }
    }
    for &v in snr {
        if !(v >= 0.0 && v.is_finite()) {
            return Err(Error::NegativeEntry {
                what: "SNR",
                value: v,
            });
        }
    }
    Ok(())
}

/// `sum phi log2(1 + snr) - sqrt(sum phi) * qinv / ln 2`, the unit-dispersion
/// normal approximation. May be negative; it is not clamped.
pub fn achievable_bits(phi: &[f64], snr: &[f64], qinv: f64) -> Result<f64> {
    check_inputs(phi, snr)?;
    let capacity: f64 = phi
        .iter()
        .zip(snr)
        .map(|(&f, &s)| f * s.ln_1p() / LN_2)
        .sum();
    let blocklength: f64 = phi.iter().sum();
    Ok(capacity - blocklength.sqrt() * qinv / LN_2)
}

/// As [`achievable_bits`] but with dispersion `V = 1 - (1 + snr)^-2` inside the
/// square root. Always at least the unit-dispersion value.
pub fn exact_dispersion_bits(phi: &[f64], snr: &[f64], qinv: f64) -> Result<f64> {
    check_inputs(phi, snr)?;
    let mut capacity = 0.0;
    let mut dispersion = 0.0;
    for (&f, &s) in phi.iter().zip(snr) {
        capacity += f * s.ln_1p() / LN_2;
        dispersion += f * (1.0 - (1.0 + s).powi(-2));
    }
    Ok(capacity - dispersion.sqrt() * qinv / LN_2)
}

/// First-order upper bound on `sqrt(l)` around `anchor`; tight at `l == anchor`.
pub fn sqrt_taylor_bound(l: f64, anchor: f64) -> Result<f64> {
    if !(anchor > 0.0) {
        return Err(Error::NonPositiveAnchor(anchor));
    }
    Ok((l + anchor) / (2.0 * anchor.sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    // 40-digit reference values of Q^-1.
    const QINV_1E3: f64 = 3.090232306167813541540399830107379205491;
    const QINV_1E6: f64 = 4.753424308822898948193988187004275005642;
    const QINV_1E7: f64 = 5.199337582192816931587347266962336866510;

    #[test]
    fn q_func_reference_points() {
        assert_eq!(q_func(0.0), 0.5);
        assert_relative_eq!(q_func(2.0), 0.02275013194817920720028, max_relative = 1e-13);
        assert_relative_eq!(q_func(4.7534243), 1.000000043658640435768e-6, max_relative = 1e-10);
        for x in [0.3, 1.7, 3.9] {
            assert!((q_func(-x) - (1.0 - q_func(x))).abs() < 1e-15);
        }
    }

    #[test]
    fn q_inv_reference_points() {
        assert_eq!(q_inv(0.5).unwrap(), 0.0);
        assert_relative_eq!(q_inv(1e-3).unwrap(), QINV_1E3, max_relative = 1e-12);
        assert_relative_eq!(q_inv(1e-6).unwrap(), QINV_1E6, max_relative = 1e-12);
        assert_relative_eq!(q_inv(1e-7).unwrap(), QINV_1E7, max_relative = 1e-12);
        assert!((q_inv(q_func(2.0)).unwrap() - 2.0).abs() < 1e-8);
        assert!(q_inv(0.9).unwrap() < 0.0);
        for bad in [0.0, 1.0, -0.1, f64::NAN] {
            assert!(matches!(q_inv(bad), Err(Error::ProbabilityOutOfRange(_))));
        }
    }

    #[test]
    fn q_and_inverse_strictly_decreasing_on_grid() {
        let xs: Vec<f64> = (0..400).map(|i| -8.0 + i as f64 * 0.04).collect();
        for w in xs.windows(2) {
            assert!(q_func(w[1]) < q_func(w[0]));
        }
        let eps: Vec<f64> = (1..200).map(|i| 10f64.powf(-12.0 + i as f64 * 0.06)).collect();
        for w in eps.windows(2) {
            assert!(q_inv(w[1]).unwrap() < q_inv(w[0]).unwrap());
        }
    }

    #[test]
    fn achievable_bits_examples() {
        // one RB at SNR 15: 4 bits minus the dispersion penalty
        let b = achievable_bits(&[1.0], &[15.0], QINV_1E6).unwrap();
        assert_relative_eq!(b, -2.857741677579844821179, max_relative = 1e-13);
        let b = achievable_bits(&[1.0, 0.5], &[3.0, 7.0], 0.0).unwrap();
        assert_relative_eq!(b, 2.0 + 1.5, max_relative = 1e-14);
        assert_eq!(achievable_bits(&[0.0, 0.0], &[5.0, 1.0], QINV_1E6).unwrap(), 0.0);
        assert!(achievable_bits(&[1.0], &[-1.0], 1.0).is_err());
        assert!(achievable_bits(&[-0.1], &[1.0], 1.0).is_err());
        assert!(achievable_bits(&[1.0], &[1.0, 2.0], 1.0).is_err());
    }

    #[test]
    fn exact_dispersion_examples() {
        let q = QINV_1E6;
        let b = exact_dispersion_bits(&[1.0], &[3.0], q).unwrap();
        assert_relative_eq!(b, 2.0 - 0.9375f64.sqrt() * q / LN_2, max_relative = 1e-14);
        assert_eq!(exact_dispersion_bits(&[1.0, 1.0], &[0.0, 0.0], q).unwrap(), 0.0);
        let hi = [1e9, 1e10];
        let a = achievable_bits(&[1.0, 1.0], &hi, q).unwrap();
        let e = exact_dispersion_bits(&[1.0, 1.0], &hi, q).unwrap();
        assert_relative_eq!(a, e, max_relative = 1e-12);
    }

    #[test]
    fn rate_context_switches_dispersion() {
        let mut ctx = RateContext::new(&[1e-6, 1e-3]).unwrap();
        assert_relative_eq!(ctx.qinv[0], QINV_1E6, max_relative = 1e-12);
        let v = ctx.bits(1, &[1.0], &[3.0]).unwrap();
        ctx.use_exact_dispersion = true;
        assert!(ctx.bits(1, &[1.0], &[3.0]).unwrap() > v);
    }

    #[test]
    fn taylor_bound_examples() {
        assert_eq!(sqrt_taylor_bound(4.0, 4.0).unwrap(), 2.0);
        assert_eq!(sqrt_taylor_bound(0.0, 1.0).unwrap(), 0.5);
        assert!(sqrt_taylor_bound(1.0, 0.0).is_err());
    }

    proptest! {
        #[test]
        fn taylor_bound_dominates_sqrt(l in 0.0f64..100.0, anchor in 1e-3f64..100.0) {
            let b = sqrt_taylor_bound(l, anchor).unwrap();
            prop_assert!(b - l.sqrt() >= -1e-12);
        }

        #[test]
        fn q_inv_round_trip(log_eps in -12.0f64..-0.31) {
            let eps = 10f64.powf(log_eps);
            let x = q_inv(eps).unwrap();
            prop_assert!(((q_func(x) - eps) / eps).abs() <= 1e-8);
        }

        #[test]
        fn exact_dispersion_never_below_unit_dispersion(
            entries in proptest::collection::vec((0.0f64..1.0, 0.0f64..1e4), 1..12),
            qinv in 0.0f64..6.0,
        ) {
            let (phi, snr): (Vec<f64>, Vec<f64>) = entries.into_iter().unzip();
            let a = achievable_bits(&phi, &snr, qinv).unwrap();
            let e = exact_dispersion_bits(&phi, &snr, qinv).unwrap();
            prop_assert!(e >= a - 1e-9);
        }

        #[test]
        fn bits_monotone_in_snr_and_allocation(
            entries in proptest::collection::vec((0.0f64..1.0, 0.0f64..1e3), 1..8),
            idx in 0usize..8,
            bump in 0.0f64..10.0,
            qinv in 0.0f64..6.0,
        ) {
            let (phi, snr): (Vec<f64>, Vec<f64>) = entries.into_iter().unzip();
            let i = idx % phi.len();
            let base = achievable_bits(&phi, &snr, qinv).unwrap();
            let mut snr2 = snr.clone();
            snr2[i] += bump;
            prop_assert!(achievable_bits(&phi, &snr2, qinv).unwrap() >= base - 1e-12);
            let mut phi2 = phi.clone();
            phi2[i] += bump;
            let a = achievable_bits(&phi, &snr, 0.0).unwrap();
            prop_assert!(achievable_bits(&phi2, &snr, 0.0).unwrap() >= a - 1e-12);
        }
    }
}
