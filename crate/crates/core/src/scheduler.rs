//! Penalized successive convex approximation over relaxed RB assignments.
//!
//! Each outer iteration solves the convex inner problem at the current
//! anchors, moves the anchors to the new relaxed assignment and grows the
//! penalty weight geometrically. Once the relaxed assignment is sparse and the
//! power has settled, the assignment is rounded, powers are refit exactly, and
//! beamformers are recovered along the channel estimates.

use std::f64::consts::LN_2;

use ndarray::{Array3, Array4};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::convex::{
    deadline_mask, power_refit, solve_p4, BarrierSettings, Penalty, RefitStatus, SubproblemSpec,
    SubproblemStatus,
};
use crate::error::{Error, Result};
use crate::fbl::{achievable_bits, RateContext};
use crate::model::{norm, ChannelSet, GainMatrix, Instance, ScenarioConfig};

/// Smallest blocklength anchor handed to the square-root linearization.
const MIN_BLOCKLENGTH_ANCHOR: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "ncp")]
    Ncp,
    #[serde(rename = "rw_l1")]
    ReweightedL1,
}

impl Method {
    pub fn label(self) -> &'static str {
        match self {
            Method::Ncp => "ncp",
            Method::ReweightedL1 => "rw_l1",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOptions {
    pub method: Method,
    /// Initial penalty weight.
    pub lambda0: f64,
    /// Penalty growth factor per outer iteration.
    pub eta: f64,
    /// Relative tolerance on the change of relaxed total power.
    pub epsilon_power: f64,
    /// Tolerance on the sparsity measure (unit-weight NCP value, or the count
    /// of surplus nonzeros for reweighted l1).
    pub epsilon_penalty: f64,
    pub max_outer: usize,
    /// Offset in the reweighted-l1 weights `1 / (phi + xi)`.
    pub xi: f64,
    /// Rounding threshold on the dominant entry of each RB.
    pub binary_tol: f64,
    /// Entries above this count as nonzero in the reweighted-l1 sparsity measure.
    pub support_tol: f64,
    pub inner: BarrierSettings,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            method: Method::Ncp,
            lambda0: 0.001,
            eta: 1.8,
            epsilon_power: 1e-4,
            epsilon_penalty: 1e-5,
            max_outer: 100,
            xi: 0.01,
            binary_tol: 0.5,
            support_tol: 1e-3,
            inner: BarrierSettings::default(),
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda0 > 0.0) {
            return Err(Error::config("solver.lambda0", "must be positive"));
        }
        if !(self.eta > 1.0) {
            return Err(Error::config("solver.eta", "must exceed 1"));
        }
        if !(self.epsilon_power > 0.0 && self.epsilon_penalty > 0.0) {
            return Err(Error::config("solver.epsilon", "tolerances must be positive"));
        }
        if !(self.xi > 0.0) {
            return Err(Error::config("solver.xi", "must be positive"));
        }
        if self.max_outer == 0 {
            return Err(Error::config("solver.max_outer", "must be at least 1"));
        }
        if !(self.binary_tol > 0.0 && self.binary_tol <= 1.0) {
            return Err(Error::config("solver.binary_tol", "must lie in (0, 1]"));
        }
        if !(self.support_tol > 0.0 && self.support_tol < 1.0) {
            return Err(Error::config("solver.support_tol", "must lie in (0, 1)"));
        }
        self.inner.validate()
    }

    pub fn with_method(mut self, method: Method) -> Self {
        self.method = method;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleStatus {
    Solved,
    Infeasible,
    NotConverged,
}

impl ScheduleStatus {
    pub fn label(self) -> &'static str {
        match self {
            ScheduleStatus::Solved => "solved",
            ScheduleStatus::Infeasible => "infeasible",
            ScheduleStatus::NotConverged => "not_converged",
        }
    }
}

/// One outer iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Relaxed total power returned by the inner solve.
    pub p_tot: f64,
    /// Sparsity measure after the solve.
    pub penalty: f64,
    /// Penalty weight used in the solve.
    pub lambda: f64,
    /// Relaxed blocklength per robot after the solve.
    pub blocklength: Vec<f64>,
    pub newton_iterations: usize,
    pub inner_status: SubproblemStatus,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScheduleResult {
    pub method: Method,
    /// Binary `phi[m][n][k]`.
    pub assignment: Array3<f64>,
    /// Relaxed assignment of the last inner solve, before rounding.
    pub relaxed_phi: Array3<f64>,
    /// Powers in watts.
    pub p: Array3<f64>,
    /// `w[m][n][k]` (shape `(M, N, K, Nt)`), present when channels were supplied.
    pub beamformers: Option<Array4<Complex64>>,
    pub p_tot: f64,
    pub iterations: usize,
    pub trajectory: Vec<IterationRecord>,
    pub status: ScheduleStatus,
    /// Bits delivered per robot under worst-case SNR and unit dispersion.
    pub achieved_bits: Vec<f64>,
    pub detail: Option<String>,
}

/// `(lambda/2) sum_mn (|phi_mn|_1^2 - |phi_mn|_2^2)`.
pub fn ncp_penalty(phi: &Array3<f64>, lambda: f64) -> f64 {
    let (m_rbs, n_sym, k_rob) = phi.dim();
    let mut total = 0.0;
    for m in 0..m_rbs {
        for n in 0..n_sym {
            let (mut l1, mut l2sq) = (0.0, 0.0);
            for k in 0..k_rob {
                let v = phi[[m, n, k]];
                l1 += v.abs();
                l2sq += v * v;
            }
            total += l1 * l1 - l2sq;
        }
    }
    0.5 * lambda * total
}

/// Number of entries beyond the first above `support_tol`, summed over RBs.
pub fn sparsity_violation(phi: &Array3<f64>, support_tol: f64) -> f64 {
    let (m_rbs, n_sym, k_rob) = phi.dim();
    let mut surplus = 0usize;
    for m in 0..m_rbs {
        for n in 0..n_sym {
            let count = (0..k_rob).filter(|&k| phi[[m, n, k]] > support_tol).count();
            surplus += count.saturating_sub(1);
        }
    }
    surplus as f64
}

/// Per RB: the largest entry becomes 1 if it reaches `binary_tol` (lowest
/// robot index wins ties), everything else 0.
pub fn round_assignment(phi: &Array3<f64>, binary_tol: f64) -> Array3<f64> {
    let (m_rbs, n_sym, k_rob) = phi.dim();
    let mut out = Array3::zeros(phi.dim());
    for m in 0..m_rbs {
        for n in 0..n_sym {
            let mut best: Option<(usize, f64)> = None;
            for k in 0..k_rob {
                let v = phi[[m, n, k]];
                if best.is_none_or(|(_, b)| v > b) {
                    best = Some((k, v));
                }
            }
            if let Some((k, v)) = best {
                if v >= binary_tol {
                    out[[m, n, k]] = 1.0;
                }
            }
        }
    }
    out
}

/// `w = sqrt(p) h_hat / |h_hat|` for every entry.
pub fn recover_beamformers(p: &Array3<f64>, channels: &ChannelSet) -> Result<Array4<Complex64>> {
    let (m_rbs, n_sym, k_rob) = p.dim();
    let nt = channels.hhat.shape()[3];
    if channels.hhat.shape()[..3] != [m_rbs, n_sym, k_rob] {
        return Err(Error::DimensionMismatch(format!(
            "powers {:?} vs channels {:?}",
            p.dim(),
            channels.hhat.shape()
        )));
    }
    let mut w = Array4::zeros((m_rbs, n_sym, k_rob, nt));
    for ((m, n, k), &pw) in p.indexed_iter() {
        if pw < 0.0 {
            return Err(Error::NegativeEntry {
                what: "power",
                value: pw,
            });
        }
        if pw == 0.0 {
            continue;
        }
        let h = channels.vector(m, n, k);
        let nrm = norm(&h);
        if nrm == 0.0 {
            return Err(Error::ZeroChannel);
        }
        let scale = pw.sqrt() / nrm;
        for (a, z) in h.iter().enumerate() {
            w[[m, n, k, a]] = z * scale;
        }
    }
    Ok(w)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub passed: bool,
    /// Most negative slack found (non-negative when passed).
    pub worst_margin: f64,
    pub violations: usize,
}

impl CheckOutcome {
    fn from_margins(margins: impl IntoIterator<Item = f64>, tol: f64) -> Self {
        let mut worst = f64::INFINITY;
        let mut violations = 0;
        for m in margins {
            worst = worst.min(m);
            if m < -tol {
                violations += 1;
            }
        }
        CheckOutcome {
            passed: violations == 0,
            worst_margin: if worst.is_finite() { worst } else { 0.0 },
            violations,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub exclusivity: CheckOutcome,
    pub binary: CheckOutcome,
    pub deadline: CheckOutcome,
    pub power_cap: CheckOutcome,
    /// `|w|^2 = p`; `None` when the schedule carries no beamformers.
    pub beamformer_norm: Option<CheckOutcome>,
    pub rate: CheckOutcome,
    /// Delivered minus requested bits, per robot.
    pub bits_margin: Vec<f64>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.exclusivity.passed
            && self.binary.passed
            && self.deadline.passed
            && self.power_cap.passed
            && self.beamformer_norm.as_ref().is_none_or(|c| c.passed)
            && self.rate.passed
    }
}

const BITS_TOL: f64 = 1e-6;

/// Re-checks every constraint of the original mixed-integer problem from raw
/// inputs. Each check is evaluated independently of the others.
pub fn validate_schedule(
    result: &ScheduleResult,
    gains: &GainMatrix,
    config: &ScenarioConfig,
) -> Result<ValidationReport> {
    let shape = config.grid_shape();
    if result.assignment.dim() != shape || result.p.dim() != shape || gains.shape() != shape {
        return Err(Error::DimensionMismatch("schedule vs config shape".into()));
    }
    let (m_rbs, n_sym, k_rob) = shape;
    let phi = &result.assignment;
    let p = &result.p;
    let pmax = config.pmax_watts;
    let tiny = 1e-12;

    let exclusivity = CheckOutcome::from_margins(
        (0..m_rbs).flat_map(|m| {
            (0..n_sym).map(move |n| 1.0 - (0..k_rob).map(|k| phi[[m, n, k]]).sum::<f64>())
        }),
        tiny,
    );
    let binary = CheckOutcome::from_margins(
        phi.iter().map(|&v| -(v.min(1.0 - v)).max(0.0) - if v.is_finite() { 0.0 } else { 1.0 }),
        tiny,
    );
    let deadline = CheckOutcome::from_margins(
        phi.indexed_iter().map(|((_, n, k), &v)| {
            if config.within_deadline(n, k) {
                0.0
            } else {
                -v.abs()
            }
        }),
        tiny,
    );
    let power_cap = CheckOutcome::from_margins(
        phi.iter()
            .zip(p.iter())
            .flat_map(|(&f, &pw)| [pw, f * pmax - pw]),
        tiny * pmax.max(1.0),
    );
    let beamformer_norm = result.beamformers.as_ref().map(|w| {
        CheckOutcome::from_margins(
            p.indexed_iter().map(|((m, n, k), &pw)| {
                let wn: f64 = (0..w.shape()[3]).map(|a| w[[m, n, k, a]].norm_sqr()).sum();
                -(wn - pw).abs() / pw.max(pmax * 1e-12)
            }),
            1e-9,
        )
    });

    let rates = RateContext::from_config(config)?;
    let mut bits_margin = Vec::with_capacity(k_rob);
    for k in 0..k_rob {
        let mut f = Vec::with_capacity(m_rbs * n_sym);
        let mut snr = Vec::with_capacity(m_rbs * n_sym);
        for m in 0..m_rbs {
            for n in 0..n_sym {
                f.push(phi[[m, n, k]].max(0.0));
                snr.push(gains.get(m, n, k) * p[[m, n, k]].max(0.0));
            }
        }
        bits_margin.push(rates.bits(k, &f, &snr)? - config.payload_bits[k]);
    }
    let rate = CheckOutcome::from_margins(bits_margin.iter().copied(), BITS_TOL);
    Ok(ValidationReport {
        exclusivity,
        binary,
        deadline,
        power_cap,
        beamformer_norm,
        rate,
        bits_margin,
    })
}

/// Runs the method selected in `opts`.
pub fn solve(instance: &Instance, opts: &SolverOptions) -> Result<ScheduleResult> {
    solve_penalized(instance, opts, opts.method)
}

/// Penalized SCA with the non-convex `l1^2 - l2^2` sparsity penalty.
pub fn solve_ncp(instance: &Instance, opts: &SolverOptions) -> Result<ScheduleResult> {
    solve_penalized(instance, opts, Method::Ncp)
}

/// Same outer loop with a reweighted-l1 penalty `lambda sum phi / (phi_prev + xi)`.
pub fn solve_rw_l1(instance: &Instance, opts: &SolverOptions) -> Result<ScheduleResult> {
    solve_penalized(instance, opts, Method::ReweightedL1)
}

fn initial_assignment(config: &ScenarioConfig) -> Array3<f64> {
    let share = 1.0 / config.num_robots as f64;
    Array3::from_shape_fn(config.grid_shape(), |(_, n, k)| {
        if config.within_deadline(n, k) {
            share
        } else {
            0.0
        }
    })
}

fn blocklengths(phi: &Array3<f64>) -> Vec<f64> {
    let k_rob = phi.dim().2;
    (0..k_rob)
        .map(|k| phi.index_axis(ndarray::Axis(2), k).sum())
        .collect()
}

fn solve_penalized(instance: &Instance, opts: &SolverOptions, method: Method) -> Result<ScheduleResult> {
    opts.validate()?;
    let config = &instance.config;
    let gains = &instance.gains;
    let rates = RateContext::from_config(config)?;
    let shape = config.grid_shape();

    let mut anchor = initial_assignment(config);
    let mut l_anchor = blocklengths(&anchor);
    let mut trajectory: Vec<IterationRecord> = Vec::new();
    let mut relaxed = anchor.clone();
    let mut converged = false;
    let mask = deadline_mask(config);

    for iteration in 0..opts.max_outer {
        let lambda = opts.lambda0 * opts.eta.powi(iteration as i32);
        let penalty = match method {
            Method::Ncp => Penalty::Ncp { lambda },
            Method::ReweightedL1 => Penalty::ReweightedL1 {
                lambda,
                weights: anchor.mapv(|a| 1.0 / (a + opts.xi)),
            },
        };
        let spec = SubproblemSpec {
            gains: gains.clone(),
            payload_bits: config.payload_bits.clone(),
            qinv: rates.qinv.clone(),
            deadline_mask: mask.clone(),
            phi_anchor: anchor.clone(),
            l_anchor: l_anchor.iter().map(|l| l.max(MIN_BLOCKLENGTH_ANCHOR)).collect(),
            penalty,
            pmax: config.pmax_watts,
            settings: opts.inner.clone(),
        };
        let sol = solve_p4(&spec)?;
        if sol.status == SubproblemStatus::Infeasible {
            return Ok(ScheduleResult {
                method,
                assignment: Array3::zeros(shape),
                relaxed_phi: relaxed,
                p: Array3::zeros(shape),
                beamformers: None,
                p_tot: f64::INFINITY,
                iterations: iteration + 1,
                trajectory,
                status: ScheduleStatus::Infeasible,
                achieved_bits: vec![0.0; config.num_robots],
                detail: sol.certificate,
            });
        }
        let p_tot = sol.total_power();
        let measure = match method {
            Method::Ncp => ncp_penalty(&sol.phi, 1.0),
            Method::ReweightedL1 => sparsity_violation(&sol.phi, opts.support_tol),
        };
        let blocklength = blocklengths(&sol.phi);
        let settled = trajectory.last().is_some_and(|prev| {
            (p_tot - prev.p_tot).abs() <= opts.epsilon_power * p_tot.abs().max(f64::MIN_POSITIVE)
        });
        trajectory.push(IterationRecord {
            iteration,
            p_tot,
            penalty: measure,
            lambda,
            blocklength: blocklength.clone(),
            newton_iterations: sol.newton_iterations,
            inner_status: sol.status,
        });
        relaxed = sol.phi.clone();
        anchor = sol.phi.mapv(|v| v.clamp(0.0, 1.0));
        l_anchor = blocklength;
        if settled && measure <= opts.epsilon_penalty {
            converged = true;
            break;
        }
    }

    let sparse_enough = trajectory
        .last()
        .is_some_and(|r| r.penalty <= opts.epsilon_penalty);
    let mut result = finish(instance, opts, method, relaxed, trajectory)?;
    if result.status == ScheduleStatus::Solved && !converged && !sparse_enough {
        result.status = ScheduleStatus::NotConverged;
        result.detail = Some("outer iteration limit reached before the assignment became sparse".into());
    }
    Ok(result)
}

/// Rounds, refits powers (dropping RBs that end up unpowered), recovers
/// beamformers and validates.
fn finish(
    instance: &Instance,
    opts: &SolverOptions,
    method: Method,
    relaxed: Array3<f64>,
    trajectory: Vec<IterationRecord>,
) -> Result<ScheduleResult> {
    let config = &instance.config;
    let gains = &instance.gains;
    let rates = RateContext::from_config(config)?;
    let mut assignment = round_assignment(&relaxed, opts.binary_tol);
    let mut refit;
    loop {
        refit = power_refit(
            &assignment,
            gains,
            &config.payload_bits,
            &rates.qinv,
            config.pmax_watts,
        )?;
        if refit.status != RefitStatus::Feasible {
            break;
        }
        let mut pruned = false;
        for (a, &pw) in assignment.iter_mut().zip(refit.p.iter()) {
            if *a > 0.5 && pw == 0.0 {
                *a = 0.0;
                pruned = true;
            }
        }
        if !pruned {
            break;
        }
    }
    let iterations = trajectory.len();
    if let RefitStatus::Infeasible(k) = refit.status {
        return Ok(ScheduleResult {
            method,
            assignment,
            relaxed_phi: relaxed,
            p: refit.p,
            beamformers: None,
            p_tot: f64::INFINITY,
            iterations,
            trajectory,
            status: ScheduleStatus::Infeasible,
            achieved_bits: vec![0.0; config.num_robots],
            detail: Some(format!("robot {k} cannot meet its payload on the rounded assignment")),
        });
    }
    let p = refit.p;
    let beamformers = instance
        .channels
        .as_ref()
        .map(|ch| recover_beamformers(&p, ch))
        .transpose()?;
    let achieved_bits = (0..config.num_robots)
        .map(|k| {
            let f: Vec<f64> = assignment.index_axis(ndarray::Axis(2), k).iter().copied().collect();
            let snr: Vec<f64> = p
                .index_axis(ndarray::Axis(2), k)
                .iter()
                .zip(gains.g.index_axis(ndarray::Axis(2), k).iter())
                .map(|(pw, g)| pw * g)
                .collect();
            achievable_bits(&f, &snr, rates.qinv[k])
        })
        .collect::<Result<Vec<_>>>()?;
    let mut result = ScheduleResult {
        method,
        p_tot: p.sum(),
        assignment,
        relaxed_phi: relaxed,
        p,
        beamformers,
        iterations,
        trajectory,
        status: ScheduleStatus::Solved,
        achieved_bits,
        detail: None,
    };
    let report = validate_schedule(&result, gains, config)?;
    if !report.passed() {
        // A refit schedule that fails validation is a defect; surface it.
        result.status = ScheduleStatus::Infeasible;
        result.detail = Some(format!("validation failed: {report:?}"));
    }
    Ok(result)
}

/// Shannon bits a robot must carry over `l` RBs; zero when it has no payload.
pub fn refit_target_bits(payload: f64, blocklength: usize, qinv: f64) -> f64 {
    if payload <= 0.0 {
        return 0.0;
    }
    payload + (blocklength as f64).sqrt() * qinv / LN_2
}
