//! Ground truth for verification: exhaustive search over binary assignments
//! of tiny instances, and Monte-Carlo sampling of the worst-case SNR inside
//! the CSI error ball.

use std::collections::HashMap;

use ndarray::Array3;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::convex::water_fill;
use crate::error::{Error, Result};
use crate::fbl::RateContext;
use crate::model::{norm, GainMatrix, PathLossModel, ScenarioConfig};
use crate::scheduler::SolverOptions;

/// Largest number of assignments [`exhaustive_optimum`] will enumerate.
pub const MAX_ASSIGNMENTS: u64 = 1_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum OracleOutcome {
    Optimal {
        p_tot: f64,
        /// Binary `phi[m][n][k]`.
        assignment: Array3<f64>,
        p: Array3<f64>,
    },
    Infeasible,
}

impl OracleOutcome {
    pub fn p_tot(&self) -> Option<f64> {
        match self {
            OracleOutcome::Optimal { p_tot, .. } => Some(*p_tot),
            OracleOutcome::Infeasible => None,
        }
    }
}

/// Per-robot minimum power over an RB subset, memoized by bitmask.
struct SubsetCost<'a> {
    gains: &'a GainMatrix,
    config: &'a ScenarioConfig,
    qinv: &'a [f64],
    slots: &'a [(usize, usize)],
    memo: Vec<HashMap<u64, Option<f64>>>,
}

impl SubsetCost<'_> {
    fn cost(&mut self, k: usize, mask: u64) -> Option<f64> {
        if let Some(&c) = self.memo[k].get(&mask) {
            return c;
        }
        let g: Vec<f64> = self
            .slots
            .iter()
            .enumerate()
            .filter(|(i, _)| mask >> i & 1 == 1)
            .map(|(_, &(m, n))| self.gains.get(m, n, k))
            .collect();
        let target = crate::scheduler::refit_target_bits(
            self.config.payload_bits[k],
            g.len(),
            self.qinv[k],
        );
        let c = water_fill(&g, target, self.config.pmax_watts).map(|p| p.iter().sum());
        self.memo[k].insert(mask, c);
        c
    }
}

/// Global minimum of total power over every map RB -> {unused, robot 1..K}
/// that respects the deadlines, with powers refit exactly per robot. Among
/// equal minima the first assignment in lexicographic order wins (RBs in
/// `(m, n)` row-major order, "unused" before robot 0 before robot 1...).
pub fn exhaustive_optimum(gains: &GainMatrix, config: &ScenarioConfig) -> Result<OracleOutcome> {
    config.validate()?;
    let shape = config.grid_shape();
    if gains.shape() != shape {
        return Err(Error::DimensionMismatch(format!(
            "gains {:?} vs config {:?}",
            gains.shape(),
            shape
        )));
    }
    let (m_rbs, n_sym, k_rob) = shape;
    let slots: Vec<(usize, usize)> = (0..m_rbs)
        .flat_map(|m| (0..n_sym).map(move |n| (m, n)))
        .collect();
    let base = (k_rob + 1) as u64;
    let total = (0..slots.len()).try_fold(1u64, |acc, _| acc.checked_mul(base));
    let total = match total {
        Some(t) if t <= MAX_ASSIGNMENTS => t,
        _ => {
            return Err(Error::InstanceTooLarge {
                assignments: total.map_or(f64::INFINITY, |t| t as f64),
                limit: MAX_ASSIGNMENTS as f64,
            })
        }
    };
    let rates = RateContext::from_config(config)?;
    // Digit choices per slot that respect the deadline: 0 = unused, k+1 = robot k.
    let allowed: Vec<Vec<bool>> = slots
        .iter()
        .map(|&(_, n)| {
            std::iter::once(true)
                .chain((0..k_rob).map(|k| config.within_deadline(n, k)))
                .collect()
        })
        .collect();

    let chunks = 64u64.min(total);
    let per = total.div_ceil(chunks);
    let best = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut costs = SubsetCost {
                gains,
                config,
                qinv: &rates.qinv,
                slots: &slots,
                memo: vec![HashMap::new(); k_rob],
            };
            let mut best: Option<(f64, u64)> = None;
            let mut digits = vec![0usize; slots.len()];
            let mut masks = vec![0u64; k_rob];
            for index in (c * per)..((c + 1) * per).min(total) {
                // Most significant digit is the first slot.
                let mut rest = index;
                for d in digits.iter_mut().rev() {
                    *d = (rest % base) as usize;
                    rest /= base;
                }
                if digits.iter().zip(&allowed).any(|(&d, ok)| !ok[d]) {
                    continue;
                }
                masks.iter_mut().for_each(|m| *m = 0);
                for (i, &d) in digits.iter().enumerate() {
                    if d > 0 {
                        masks[d - 1] |= 1 << i;
                    }
                }
                let mut sum = 0.0;
                let mut feasible = true;
                for (k, &mask) in masks.iter().enumerate() {
                    match costs.cost(k, mask) {
                        Some(c) => sum += c,
                        None => {
                            feasible = false;
                            break;
                        }
                    }
                }
                if feasible && best.is_none_or(|(b, _)| sum < b) {
                    best = Some((sum, index));
                }
            }
            best
        })
        .reduce(
            || None,
            |a, b| match (a, b) {
                (Some(x), Some(y)) => Some(if y.0 < x.0 || (y.0 == x.0 && y.1 < x.1) { y } else { x }),
                (x, None) => x,
                (None, y) => y,
            },
        );

    let Some((_, index)) = best else {
        return Ok(OracleOutcome::Infeasible);
    };
    let mut assignment = Array3::zeros(shape);
    let mut rest = index;
    for &(m, n) in slots.iter().rev() {
        let d = (rest % base) as usize;
        rest /= base;
        if d > 0 {
            assignment[[m, n, d - 1]] = 1.0;
        }
    }
    let refit = crate::convex::power_refit(
        &assignment,
        gains,
        &config.payload_bits,
        &rates.qinv,
        config.pmax_watts,
    )?;
    Ok(OracleOutcome::Optimal {
        p_tot: refit.total_power(),
        assignment,
        p: refit.p,
    })
}

/// Error minimizing `|(h + e)^H w|` over `|e| <= delta`.
pub fn worst_error_for(hhat: &[Complex64], delta: f64, w: &[Complex64]) -> Vec<Complex64> {
    let z: Complex64 = hhat.iter().zip(w).map(|(h, wi)| h.conj() * wi).sum();
    let wn = norm(w);
    if wn == 0.0 || z.norm() == 0.0 {
        return vec![Complex64::new(0.0, 0.0); w.len()];
    }
    let c = delta.min(z.norm() / wn);
    let phase = z.conj() / z.norm();
    w.iter().map(|wi| -c * phase * wi / wn).collect()
}

fn received_power(hhat: &[Complex64], e: &[Complex64], w: &[Complex64]) -> f64 {
    hhat.iter()
        .zip(e)
        .zip(w)
        .map(|((h, e), wi)| (h + e).conj() * wi)
        .sum::<Complex64>()
        .norm_sqr()
}

/// Minimum of `|(h_hat + e)^H w|^2` over `n_samples` errors drawn uniformly on
/// the sphere `|e| = delta`, plus the analytic minimizer when
/// `include_minimizer` is set.
pub fn sampled_worst_snr(
    hhat: &[Complex64],
    delta: f64,
    beamformer: &[Complex64],
    n_samples: usize,
    seed: u64,
    include_minimizer: bool,
) -> Result<f64> {
    if hhat.len() != beamformer.len() {
        return Err(Error::DimensionMismatch(format!(
            "channel length {} vs beamformer length {}",
            hhat.len(),
            beamformer.len()
        )));
    }
    if n_samples == 0 {
        return Err(Error::config("n_samples", "must be at least 1"));
    }
    if !(delta >= 0.0) {
        return Err(Error::NegativeEntry {
            what: "delta",
            value: delta,
        });
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut best = f64::INFINITY;
    let mut e = vec![Complex64::new(0.0, 0.0); hhat.len()];
    for _ in 0..n_samples {
        for v in e.iter_mut() {
            *v = Complex64::new(StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng));
        }
        let en = norm(&e);
        if en > 0.0 {
            e.iter_mut().for_each(|v| *v *= delta / en);
        }
        best = best.min(received_power(hhat, &e, beamformer));
    }
    if include_minimizer {
        let star = worst_error_for(hhat, delta, beamformer);
        best = best.min(received_power(hhat, &star, beamformer));
    }
    Ok(best)
}

/// Deterministic small scenario (K=2, M=2, N=2, Nt=2) for oracle comparisons.
/// Distances, payloads and deadlines vary with `index`; every tenth index asks
/// for more bits than four RBs can carry, so both verdicts get exercised.
pub fn tiny_config(index: u64) -> ScenarioConfig {
    use rand::Rng;
    let mut rng = ChaCha20Rng::seed_from_u64(0x7a11_0000 ^ index);
    let distance_m = vec![rng.random_range(40.0..90.0), rng.random_range(40.0..90.0)];
    let mut payload_bits = vec![rng.random_range(8.0..16.0), rng.random_range(8.0..16.0)];
    if index % 10 == 9 {
        payload_bits = vec![60.0, 60.0];
    }
    let deadlines = if rng.random_bool(0.5) { vec![1, 2] } else { vec![2, 2] };
    ScenarioConfig {
        num_robots: 2,
        num_rbs: 2,
        num_symbols: 2,
        num_antennas: 2,
        pmax_watts: 1.0,
        rb_bandwidth_hz: 180e3,
        payload_bits,
        deadlines,
        error_prob: vec![1e-5; 2],
        delta_sq: 0.01,
        noise_psd_dbm_hz: -173.0,
        distance_m,
        pathloss: PathLossModel {
            intercept_db: 35.3,
            slope_db: 37.6,
        },
        seed: 1000 + index,
        solver: SolverOptions::default(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::worst_case_gain;
    use approx::assert_relative_eq;
    use std::f64::consts::LN_2;

    fn single(g: f64, bits: f64, eps: f64) -> (GainMatrix, ScenarioConfig) {
        let mut cfg = tiny_config(0);
        cfg.num_robots = 1;
        cfg.num_rbs = 1;
        cfg.num_symbols = 1;
        cfg.payload_bits = vec![bits];
        cfg.deadlines = vec![1];
        cfg.error_prob = vec![eps];
        cfg.distance_m = vec![50.0];
        let gains = GainMatrix::new(Array3::from_elem((1, 1, 1), g)).unwrap();
        (gains, cfg)
    }

    #[test]
    fn single_link_matches_analytic_power() {
        let (gains, cfg) = single(1e5, 8.0, 1e-6);
        let qinv = crate::fbl::q_inv(1e-6).unwrap();
        let out = exhaustive_optimum(&gains, &cfg).unwrap();
        let expect = (2f64.powf(8.0 + qinv / LN_2) - 1.0) / 1e5;
        assert_relative_eq!(out.p_tot().unwrap(), expect, max_relative = 1e-9);
        let (gains, cfg) = single(1.0, 40.0, 1e-6);
        assert_eq!(exhaustive_optimum(&gains, &cfg).unwrap(), OracleOutcome::Infeasible);
    }

    #[test]
    fn relabeling_symmetric_robots_keeps_optimum() {
        let mut cfg = tiny_config(3);
        cfg.payload_bits = vec![12.0, 12.0];
        cfg.deadlines = vec![2, 2];
        let g = Array3::from_shape_fn((2, 2, 2), |(m, n, _)| 5e3 * (1 + m + 2 * n) as f64);
        let swapped = Array3::from_shape_fn((2, 2, 2), |(m, n, k)| g[[m, n, 1 - k]]);
        let a = exhaustive_optimum(&GainMatrix::new(g).unwrap(), &cfg).unwrap();
        let b = exhaustive_optimum(&GainMatrix::new(swapped).unwrap(), &cfg).unwrap();
        assert_relative_eq!(a.p_tot().unwrap(), b.p_tot().unwrap(), max_relative = 1e-12);
    }

    #[test]
    fn rejects_large_instances() {
        let cfg = ScenarioConfig::table1();
        let gains = GainMatrix::new(Array3::from_elem(cfg.grid_shape(), 1.0)).unwrap();
        assert!(matches!(
            exhaustive_optimum(&gains, &cfg),
            Err(Error::InstanceTooLarge { .. })
        ));
    }

    #[test]
    fn optimum_respects_deadlines() {
        let mut cfg = tiny_config(5);
        cfg.deadlines = vec![1, 2];
        let gains = GainMatrix::new(Array3::from_elem((2, 2, 2), 2e4)).unwrap();
        if let OracleOutcome::Optimal { assignment, .. } = exhaustive_optimum(&gains, &cfg).unwrap() {
            assert_eq!(assignment[[0, 1, 0]], 0.0);
            assert_eq!(assignment[[1, 1, 0]], 0.0);
        } else {
            panic!("expected a feasible instance");
        }
    }

    #[test]
    fn sampled_minimum_hits_closed_form_with_minimizer() {
        let h = [Complex64::new(0.8, -0.3), Complex64::new(-0.2, 1.1)];
        let delta = 0.1;
        let hn = norm(&h);
        let p: f64 = 2.5;
        let w: Vec<Complex64> = h.iter().map(|v| v * (p.sqrt() / hn)).collect();
        let closed = (hn - delta).powi(2) * p;
        let with = sampled_worst_snr(&h, delta, &w, 100, 1, true).unwrap();
        assert_relative_eq!(with, closed, max_relative = 1e-12);
        let without = sampled_worst_snr(&h, delta, &w, 100_000, 1, false).unwrap();
        assert!(without >= closed);
        assert!(without <= closed * 1.01);
        // gain form: worst-case received power over noise times path gain
        let g = worst_case_gain(&h, delta, 1.0, 1.0);
        assert_relative_eq!(g * p, closed, max_relative = 1e-12);
    }

    #[test]
    fn zero_radius_is_nominal_power() {
        let h = [Complex64::new(1.0, 2.0), Complex64::new(0.5, 0.0)];
        let w = [Complex64::new(0.3, 0.1), Complex64::new(-0.7, 0.2)];
        let nominal = received_power(&h, &[Complex64::new(0.0, 0.0); 2], &w);
        assert_relative_eq!(sampled_worst_snr(&h, 0.0, &w, 10, 4, false).unwrap(), nominal, max_relative = 1e-14);
        assert!(sampled_worst_snr(&h, 0.0, &w, 0, 4, false).is_err());
    }

    #[test]
    fn tiny_configs_are_valid_and_deterministic() {
        for i in 0..20 {
            let c = tiny_config(i);
            c.validate().unwrap();
            assert_eq!(c, tiny_config(i));
        }
    }
}
