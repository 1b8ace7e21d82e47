use std::f64::consts::LN_2;

use ndarray::Array3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::GainMatrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum RefitStatus {
    Feasible,
    /// Robot whose demand cannot be met even at full power on every assigned RB.
    Infeasible(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefitOutcome {
    pub p: Array3<f64>,
    pub status: RefitStatus,
}

impl RefitOutcome {
    pub fn total_power(&self) -> f64 {
        self.p.sum()
    }
}

/// Minimum-power allocation over `gains` meeting `target_bits` of Shannon rate
/// with every power in `[0, pmax]`. Capped water-filling: `p = clamp(mu - 1/g, 0, pmax)`
/// with the water level found by bisection. Returns `None` when full power on
/// every RB still falls short.
pub fn water_fill(gains: &[f64], target_bits: f64, pmax: f64) -> Option<Vec<f64>> {
    if target_bits <= 0.0 {
        return Some(vec![0.0; gains.len()]);
    }
    let alloc = |mu: f64| -> Vec<f64> {
        gains
            .iter()
            .map(|&g| if g > 0.0 { (mu - 1.0 / g).clamp(0.0, pmax) } else { 0.0 })
            .collect()
    };
    let bits = |p: &[f64]| -> f64 {
        gains
            .iter()
            .zip(p)
            .map(|(&g, &pj)| (g * pj).ln_1p() / LN_2)
            .sum()
    };
    let usable: Vec<f64> = gains.iter().copied().filter(|&g| g > 0.0).collect();
    if usable.is_empty() {
        return None;
    }
    let full = alloc(f64::INFINITY);
    if bits(&full) < target_bits {
        return None;
    }
    let mut lo = usable.iter().map(|g| 1.0 / g).fold(f64::INFINITY, f64::min);
    let mut hi = usable.iter().map(|g| 1.0 / g).fold(0.0, f64::max) + pmax;
    for _ in 0..400 {
        if hi - lo <= 1e-10 * hi {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if bits(&alloc(mid)) >= target_bits {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Some(alloc(hi))
}

/// Per-robot minimum-power refit of a binary assignment. Robot `k` must carry
/// `B_k + sqrt(l_k) qinv_k / ln 2` bits of Shannon rate over its `l_k` assigned
/// RBs; a robot with `B_k <= 0` has nothing to send and gets zero power.
pub fn power_refit(
    assignment: &Array3<f64>,
    gains: &GainMatrix,
    payload_bits: &[f64],
    qinv: &[f64],
    pmax: f64,
) -> Result<RefitOutcome> {
    let shape = gains.shape();
    if assignment.dim() != shape {
        return Err(Error::DimensionMismatch(format!(
            "assignment {:?} vs gains {:?}",
            assignment.dim(),
            shape
        )));
    }
    let (m_rbs, n_sym, k_rob) = shape;
    if payload_bits.len() != k_rob || qinv.len() != k_rob {
        return Err(Error::DimensionMismatch(
            "payload/qinv length differs from robot count".into(),
        ));
    }
    let mut p = Array3::zeros(shape);
    let mut status = RefitStatus::Feasible;
    for k in 0..k_rob {
        let slots: Vec<(usize, usize)> = (0..m_rbs)
            .flat_map(|m| (0..n_sym).map(move |n| (m, n)))
            .filter(|&(m, n)| assignment[[m, n, k]] > 0.5)
            .collect();
        let l = slots.len() as f64;
        let target = if payload_bits[k] > 0.0 {
            payload_bits[k] + l.sqrt() * qinv[k] / LN_2
        } else {
            0.0
        };
        let g: Vec<f64> = slots.iter().map(|&(m, n)| gains.get(m, n, k)).collect();
        match water_fill(&g, target, pmax) {
            Some(pk) => {
                for (&(m, n), v) in slots.iter().zip(pk) {
                    p[[m, n, k]] = v;
                }
            }
            None => {
                if status == RefitStatus::Feasible {
                    status = RefitStatus::Infeasible(k);
                }
            }
        }
    }
    Ok(RefitOutcome { p, status })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn rate(g: &[f64], p: &[f64]) -> f64 {
        g.iter().zip(p).map(|(g, p)| (1.0 + g * p).log2()).sum()
    }

    #[test]
    fn single_rb_inverts_rate() {
        let p = water_fill(&[5.0], 6.0, 100.0).unwrap();
        assert_relative_eq!(p[0], (2f64.powi(6) - 1.0) / 5.0, max_relative = 1e-9);
    }

    #[test]
    fn equal_gains_split_evenly() {
        let g = 40.0;
        let p = water_fill(&[g, g], 10.0, 10.0).unwrap();
        let expect = (2f64.powf(5.0) - 1.0) / g;
        assert_relative_eq!(p[0], expect, max_relative = 1e-9);
        assert_relative_eq!(p[1], expect, max_relative = 1e-9);
    }

    #[test]
    fn strong_rb_takes_all_load_at_small_target() {
        let g = [100.0, 1.0];
        let target = 1.0;
        let p = water_fill(&g, target, 1.0).unwrap();
        assert_eq!(p[1], 0.0);
        // brute-force grid over (p1, p2) for the cheapest feasible pair
        let steps = 2000;
        let mut best = f64::INFINITY;
        for i in 0..=steps {
            let p1 = i as f64 / steps as f64 * 0.05;
            // smallest p2 completing the target
            let rem = target - (1.0 + g[0] * p1).log2();
            let p2 = if rem <= 0.0 { 0.0 } else { (2f64.powf(rem) - 1.0) / g[1] };
            if p2 <= 1.0 {
                best = best.min(p1 + p2);
            }
        }
        assert!((p[0] + p[1] - best).abs() < 1e-3, "{:?} vs {best}", p);
        assert!(rate(&g, &p) >= target - 1e-9);
    }

    #[test]
    fn cap_binds_and_infeasible_detected() {
        let g = [10.0, 0.5];
        let cap = 1.0;
        let target = rate(&g, &[cap, cap]) - 0.1;
        let p = water_fill(&g, target, cap).unwrap();
        assert!(p.iter().all(|&v| v <= cap));
        assert_relative_eq!(p[0], cap);
        assert!(rate(&g, &p) >= target - 1e-9);
        assert!(water_fill(&g, target + 0.2, cap).is_none());
        assert!(water_fill(&[0.0, 0.0], 1.0, cap).is_none());
        assert_eq!(water_fill(&[0.0], 0.0, cap).unwrap(), vec![0.0]);
    }

    #[test]
    fn refit_reports_violating_robot() {
        let mut g = Array3::zeros((1, 2, 2));
        g[[0, 0, 0]] = 1e3;
        g[[0, 1, 1]] = 1.0;
        let gains = GainMatrix::new(g).unwrap();
        let mut a = Array3::zeros((1, 2, 2));
        a[[0, 0, 0]] = 1.0;
        a[[0, 1, 1]] = 1.0;
        let out = power_refit(&a, &gains, &[4.0, 40.0], &[1.0, 1.0], 1.0).unwrap();
        assert_eq!(out.status, RefitStatus::Infeasible(1));
        let target0 = 4.0 + 1.0 / LN_2;
        assert_relative_eq!(
            out.p[[0, 0, 0]],
            (2f64.powf(target0) - 1.0) / 1e3,
            max_relative = 1e-9
        );
        let ok = power_refit(&a, &gains, &[4.0, 1.0], &[1.0, 1.0], 1.0).unwrap();
        assert_eq!(ok.status, RefitStatus::Infeasible(1));
        let ok = power_refit(&a, &gains, &[4.0, 0.1], &[1.0, 0.0], 1.0).unwrap();
        assert_eq!(ok.status, RefitStatus::Feasible);
        let idle = power_refit(&a, &gains, &[4.0, 0.0], &[1.0, 5.0], 1.0).unwrap();
        assert_eq!(idle.status, RefitStatus::Feasible);
        assert_eq!(idle.p[[0, 1, 1]], 0.0);
    }
}
