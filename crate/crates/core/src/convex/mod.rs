//! The convex inner problem: minimum power plus a linearized sparsity penalty
//! over relaxed assignments `phi` and powers `p`, with the perspective rate
//! constraint per robot. Solved by a log-barrier interior-point method.

mod barrier;
mod refit;

use std::f64::consts::LN_2;

use ndarray::Array3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{GainMatrix, ScenarioConfig};

pub use refit::{power_refit, water_fill, RefitOutcome, RefitStatus};

/// Interior-point tolerances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BarrierSettings {
    /// Bound on the reported KKT residual (stationarity and complementarity,
    /// both relative).
    pub kkt_tol: f64,
    /// Absolute tolerance on constraint values.
    pub feas_tol: f64,
    /// Target duality gap relative to the objective.
    pub gap_tol: f64,
    /// Newton-step budget per solve (all centering stages together).
    pub newton_max: usize,
    /// Barrier weight multiplier between centering stages.
    pub barrier_factor: f64,
}

impl Default for BarrierSettings {
    fn default() -> Self {
        BarrierSettings {
            kkt_tol: 1e-6,
            feas_tol: 1e-8,
            gap_tol: 1e-9,
            newton_max: 200,
            barrier_factor: 10.0,
        }
    }
}

impl BarrierSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.kkt_tol > 0.0 && self.feas_tol > 0.0 && self.gap_tol > 0.0) {
            return Err(Error::config("solver.inner", "tolerances must be positive"));
        }
        if self.newton_max == 0 {
            return Err(Error::config("solver.inner.newton_max", "must be at least 1"));
        }
        if !(self.barrier_factor > 1.0) {
            return Err(Error::config("solver.inner.barrier_factor", "must exceed 1"));
        }
        Ok(())
    }
}

/// Sparsity-promoting term added to the total power.
#[derive(Debug, Clone, PartialEq)]
pub enum Penalty {
    None,
    /// `(lambda/2) sum_mn (|phi_mn|_1^2 - 2 a_mn . phi_mn + |a_mn|_2^2)` with `a`
    /// the anchor.
    Ncp { lambda: f64 },
    /// `lambda sum w_mnk phi_mnk`.
    ReweightedL1 { lambda: f64, weights: Array3<f64> },
}

#[derive(Debug, Clone)]
pub struct SubproblemSpec {
    pub gains: GainMatrix,
    pub payload_bits: Vec<f64>,
    pub qinv: Vec<f64>,
    /// `false` where the symbol lies beyond the robot's deadline.
    pub deadline_mask: Array3<bool>,
    pub phi_anchor: Array3<f64>,
    /// Per-robot blocklength anchor for the square-root linearization; positive.
    pub l_anchor: Vec<f64>,
    pub penalty: Penalty,
    pub pmax: f64,
    pub settings: BarrierSettings,
}

impl SubproblemSpec {
    pub fn validate(&self) -> Result<()> {
        let shape = self.gains.shape();
        let k = shape.2;
        if self.deadline_mask.dim() != shape || self.phi_anchor.dim() != shape {
            return Err(Error::DimensionMismatch("mask/anchor shape vs gains".into()));
        }
        if self.payload_bits.len() != k || self.qinv.len() != k || self.l_anchor.len() != k {
            return Err(Error::DimensionMismatch("per-robot vectors vs robot count".into()));
        }
        if let Some(&a) = self.l_anchor.iter().find(|a| !(**a > 0.0)) {
            return Err(Error::NonPositiveAnchor(a));
        }
        if self.phi_anchor.iter().any(|a| !(0.0..=1.0).contains(a)) {
            return Err(Error::config("phi_anchor", "entries must lie in [0, 1]"));
        }
        if !(self.pmax > 0.0) {
            return Err(Error::config("Pmax", "must be positive"));
        }
        match &self.penalty {
            Penalty::None => {}
            Penalty::Ncp { lambda } => {
                if !(*lambda >= 0.0) {
                    return Err(Error::config("lambda", "must be non-negative"));
                }
            }
            Penalty::ReweightedL1 { lambda, weights } => {
                if !(*lambda >= 0.0) {
                    return Err(Error::config("lambda", "must be non-negative"));
                }
                if weights.dim() != shape || weights.iter().any(|w| !(*w >= 0.0)) {
                    return Err(Error::config("weights", "need non-negative weights per entry"));
                }
            }
        }
        self.settings.validate()
    }

    /// Penalty value at `phi`, constants included.
    pub fn penalty_value(&self, phi: &Array3<f64>) -> f64 {
        let (m_rbs, n_sym, k_rob) = self.gains.shape();
        match &self.penalty {
            Penalty::None => 0.0,
            Penalty::Ncp { lambda } => {
                let mut total = 0.0;
                for m in 0..m_rbs {
                    for n in 0..n_sym {
                        let mut l1 = 0.0;
                        let mut cross = 0.0;
                        let mut anchor_sq = 0.0;
                        for k in 0..k_rob {
                            let a = self.phi_anchor[[m, n, k]];
                            l1 += phi[[m, n, k]];
                            cross += a * phi[[m, n, k]];
                            anchor_sq += a * a;
                        }
                        total += l1 * l1 - 2.0 * cross + anchor_sq;
                    }
                }
                0.5 * lambda * total
            }
            Penalty::ReweightedL1 { lambda, weights } => {
                lambda * weights.iter().zip(phi).map(|(w, f)| w * f).sum::<f64>()
            }
        }
    }
}

/// Boolean mask of `(m, n, k)` with `n` inside robot `k`'s deadline.
pub fn deadline_mask(config: &ScenarioConfig) -> Array3<bool> {
    Array3::from_shape_fn(config.grid_shape(), |(_, n, k)| config.within_deadline(n, k))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SubproblemStatus {
    Optimal,
    Infeasible,
    MaxIter,
}

#[derive(Debug, Clone)]
pub struct SubproblemSolution {
    pub phi: Array3<f64>,
    pub p: Array3<f64>,
    /// Total power plus penalty.
    pub objective: f64,
    /// Per robot: linearized rate minus payload. Robots without demand report
    /// `+inf`.
    pub rate_slack: Vec<f64>,
    pub kkt_residual: f64,
    pub status: SubproblemStatus,
    pub newton_iterations: usize,
    /// Why the problem was declared infeasible.
    pub certificate: Option<String>,
}

impl SubproblemSolution {
    pub fn total_power(&self) -> f64 {
        self.p.sum()
    }
}

/// `phi log2(1 + g p / phi)`, extended by 0 at `phi = 0`.
pub fn perspective_rate(phi: f64, p: f64, g: f64) -> f64 {
    if phi <= 0.0 {
        return 0.0;
    }
    phi * (g * p / phi).ln_1p() / LN_2
}

/// Left-hand side of the linearized rate constraint of robot `k` at `(phi, p)`.
pub fn linearized_rate(spec: &SubproblemSpec, phi: &Array3<f64>, p: &Array3<f64>, k: usize) -> f64 {
    let (m_rbs, n_sym, _) = spec.gains.shape();
    let mut capacity = 0.0;
    let mut blocklength = 0.0;
    for m in 0..m_rbs {
        for n in 0..n_sym {
            capacity += perspective_rate(phi[[m, n, k]], p[[m, n, k]], spec.gains.get(m, n, k));
            blocklength += phi[[m, n, k]];
        }
    }
    let la = spec.l_anchor[k];
    capacity - (blocklength + la) / (2.0 * la.sqrt()) * spec.qinv[k] / LN_2
}

/// Solves the inner problem. Invalid specs are errors; infeasibility and
/// iteration exhaustion are reported through the solution status.
pub fn solve_p4(spec: &SubproblemSpec) -> Result<SubproblemSolution> {
    spec.validate()?;
    Ok(barrier::solve(spec))
}
