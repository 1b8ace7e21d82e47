//! Monte-Carlo experiment runner. Every experiment is a list of independent
//! tasks (one per realization and sweep point) executed on a worker pool; rows
//! are assembled in task order, so output files do not depend on the number
//! of workers.
//!
//! CSV files have a header row and use Rust's shortest round-trip float
//! formatting. Powers of runs that did not end `solved` are written as `inf`;
//! undefined gaps as `NaN`.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{watts_to_dbm, Instance, ScenarioConfig};
use crate::oracle::{exhaustive_optimum, tiny_config};
use crate::scheduler::{
    solve, validate_schedule, Method, ScheduleResult, ScheduleStatus, ValidationReport,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Fig2,
    Fig3,
    Fig4a,
    Fig4b,
    Single,
    OracleGap,
}

impl ExperimentKind {
    pub fn file_name(self) -> &'static str {
        match self {
            ExperimentKind::Fig2 => "fig2.csv",
            ExperimentKind::Fig3 => "fig3.csv",
            ExperimentKind::Fig4a => "fig4a.csv",
            ExperimentKind::Fig4b => "fig4b.csv",
            ExperimentKind::Single => "single.json",
            ExperimentKind::OracleGap => "oracle_gap.csv",
        }
    }

    /// CSV header of the experiment's output; `None` for the JSON dump.
    pub fn csv_columns(self) -> Option<&'static [&'static str]> {
        match self {
            ExperimentKind::Fig2 => Some(&[
                "seed_index",
                "method",
                "p_tot_watts",
                "p_tot_dBm",
                "iterations",
                "status",
            ]),
            ExperimentKind::Fig3 => Some(&["lambda0", "eta", "iteration", "p_tot", "F", "lambda"]),
            ExperimentKind::Fig4a | ExperimentKind::Fig4b => Some(&[
                "panel",
                "eps",
                "Nt",
                "delta_sq",
                "D1",
                "mean_p_tot_dBm",
                "n_feasible",
            ]),
            ExperimentKind::OracleGap => Some(&[
                "instance",
                "oracle_p_tot",
                "ncp_p_tot",
                "gap_percent",
                "both_infeasible",
            ]),
            ExperimentKind::Single => None,
        }
    }
}

fn default_base() -> String {
    "table1".into()
}
fn default_realizations() -> usize {
    100
}
fn default_out_dir() -> PathBuf {
    PathBuf::from("results")
}
fn default_eps() -> Vec<f64> {
    vec![1e-7, 1e-6, 1e-5, 1e-4, 1e-3]
}
fn default_nt() -> Vec<usize> {
    vec![2, 4]
}
fn default_delta_sq() -> Vec<f64> {
    vec![0.01, 0.05]
}
fn default_d1() -> Vec<usize> {
    vec![2, 4]
}
fn default_lambda0() -> Vec<f64> {
    vec![0.001, 0.01]
}
fn default_eta() -> Vec<f64> {
    vec![1.4, 1.8]
}

/// Contents of an experiment file.
///
/// ```toml
/// experiment = "fig4a"
/// base = "table1"        # preset name, or config path relative to this file
/// n_realizations = 30
/// out_dir = "results"
/// eps = [1e-7, 1e-6, 1e-5, 1e-4]
/// nt = [2, 4]
/// delta_sq = [0.01, 0.05]
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub experiment: ExperimentKind,
    #[serde(default = "default_base")]
    pub base: String,
    /// Realizations per sweep point; instance count for `oracle_gap`.
    #[serde(default = "default_realizations")]
    pub n_realizations: usize,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    /// Channel realization used by `fig3` and `single`.
    #[serde(default)]
    pub realization: u64,
    #[serde(default = "default_eps")]
    pub eps: Vec<f64>,
    #[serde(default = "default_nt")]
    pub nt: Vec<usize>,
    #[serde(default = "default_delta_sq")]
    pub delta_sq: Vec<f64>,
    /// Deadline of the first robot.
    #[serde(default = "default_d1")]
    pub d1: Vec<usize>,
    #[serde(default = "default_lambda0")]
    pub lambda0: Vec<f64>,
    #[serde(default = "default_eta")]
    pub eta: Vec<f64>,
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

impl ExperimentSpec {
    pub fn new(experiment: ExperimentKind) -> Self {
        let mut spec: ExperimentSpec =
            toml::from_str(&format!("experiment = {:?}", kind_key(experiment))).expect("defaults parse");
        spec.experiment = experiment;
        spec
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut spec = Self::from_toml_str(&text, &path.display().to_string())?;
        spec.base_dir = path.parent().map(Path::to_path_buf);
        Ok(spec)
    }

    pub fn from_toml_str(text: &str, origin: &str) -> Result<Self> {
        let spec: ExperimentSpec = toml::from_str(text).map_err(|e| Error::Parse {
            path: origin.to_string(),
            message: e.to_string(),
        })?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_realizations == 0 {
            return Err(Error::config("n_realizations", "must be at least 1"));
        }
        if self.eps.is_empty() || self.eps.iter().any(|&e| !(e > 0.0 && e < 0.5)) {
            return Err(Error::config("eps", "values must lie in (0, 0.5)"));
        }
        if self.nt.is_empty() || self.nt.contains(&0) {
            return Err(Error::config("nt", "values must be positive"));
        }
        if self.delta_sq.is_empty() || self.delta_sq.iter().any(|&d| !(d >= 0.0 && d.is_finite())) {
            return Err(Error::config("delta_sq", "values must be finite and non-negative"));
        }
        if self.d1.is_empty() || self.d1.contains(&0) {
            return Err(Error::config("d1", "values must be positive"));
        }
        if self.lambda0.is_empty() || self.lambda0.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
            return Err(Error::config("lambda0", "values must be positive"));
        }
        if self.eta.is_empty() || self.eta.iter().any(|&e| !(e > 1.0 && e.is_finite())) {
            return Err(Error::config("eta", "values must exceed 1"));
        }
        Ok(())
    }

    /// Resolves `base` as a preset name or a path relative to the experiment file.
    pub fn base_config(&self) -> Result<ScenarioConfig> {
        if let Ok(cfg) = ScenarioConfig::preset(&self.base) {
            return Ok(cfg);
        }
        let path = match &self.base_dir {
            Some(dir) => dir.join(&self.base),
            None => PathBuf::from(&self.base),
        };
        ScenarioConfig::load(&path.display().to_string())
    }
}

fn kind_key(kind: ExperimentKind) -> &'static str {
    match kind {
        ExperimentKind::Fig2 => "fig2",
        ExperimentKind::Fig3 => "fig3",
        ExperimentKind::Fig4a => "fig4a",
        ExperimentKind::Fig4b => "fig4b",
        ExperimentKind::Single => "single",
        ExperimentKind::OracleGap => "oracle_gap",
    }
}

/// Runs `tasks` on a pool of `jobs` workers (0 = one per core), keeping order.
fn par_map<T, R, F>(tasks: Vec<T>, jobs: usize, f: F) -> Result<Vec<R>>
where
    T: Send + Sync,
    R: Send,
    F: Fn(&T) -> Result<R> + Send + Sync,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::config("jobs", e.to_string()))?;
    pool.install(|| tasks.par_iter().map(&f).collect())
}

fn solved_power(r: &ScheduleResult) -> f64 {
    if r.status == ScheduleStatus::Solved {
        r.p_tot
    } else {
        f64::INFINITY
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fig2Row {
    pub seed_index: u64,
    pub method: Method,
    pub p_tot_watts: f64,
    #[serde(rename = "p_tot_dBm")]
    pub p_tot_dbm: f64,
    pub iterations: usize,
    pub status: ScheduleStatus,
}

/// Both methods on realizations `0..R` of the base scenario.
pub fn run_fig2(spec: &ExperimentSpec, jobs: usize) -> Result<Vec<Fig2Row>> {
    let base = spec.base_config()?;
    let tasks: Vec<(u64, Method)> = (0..spec.n_realizations as u64)
        .flat_map(|r| [(r, Method::Ncp), (r, Method::ReweightedL1)])
        .collect();
    par_map(tasks, jobs, |&(r, method)| {
        let inst = Instance::generate(&base, r)?;
        let res = solve(&inst, &base.solver.clone().with_method(method))?;
        let p = solved_power(&res);
        Ok(Fig2Row {
            seed_index: r,
            method,
            p_tot_watts: p,
            p_tot_dbm: watts_to_dbm(p),
            iterations: res.iterations,
            status: res.status,
        })
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fig3Row {
    pub lambda0: f64,
    pub eta: f64,
    pub iteration: usize,
    pub p_tot: f64,
    #[serde(rename = "F")]
    pub penalty: f64,
    pub lambda: f64,
}

/// NCP trajectories on one realization for every `(lambda0, eta)` pair.
pub fn run_fig3(spec: &ExperimentSpec, jobs: usize) -> Result<Vec<Fig3Row>> {
    let base = spec.base_config()?;
    let inst = Instance::generate(&base, spec.realization)?;
    let tasks: Vec<(f64, f64)> = spec
        .lambda0
        .iter()
        .flat_map(|&l| spec.eta.iter().map(move |&e| (l, e)))
        .collect();
    let runs = par_map(tasks, jobs, |&(lambda0, eta)| {
        let mut opts = base.solver.clone().with_method(Method::Ncp);
        opts.lambda0 = lambda0;
        opts.eta = eta;
        let res = solve(&inst, &opts)?;
        Ok(res
            .trajectory
            .iter()
            .map(|t| Fig3Row {
                lambda0,
                eta,
                iteration: t.iteration,
                p_tot: t.p_tot,
                penalty: t.penalty,
                lambda: t.lambda,
            })
            .collect::<Vec<_>>())
    })?;
    Ok(runs.into_iter().flatten().collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fig4Row {
    pub panel: String,
    pub eps: f64,
    #[serde(rename = "Nt")]
    pub nt: usize,
    pub delta_sq: f64,
    #[serde(rename = "D1")]
    pub d1: usize,
    #[serde(rename = "mean_p_tot_dBm")]
    pub mean_p_tot_dbm: f64,
    pub n_feasible: usize,
}

/// Mean NCP power versus packet error probability. Panel `a` sweeps
/// `(Nt, delta_sq)` at the base first-robot deadline; panel `b` sweeps
/// `(D1, delta_sq)` at the base antenna count. Means are taken in watts over
/// solved realizations and reported in dBm.
pub fn run_fig4(spec: &ExperimentSpec, jobs: usize) -> Result<Vec<Fig4Row>> {
    let base = spec.base_config()?;
    let (base_nt, base_d1) = (base.num_antennas, base.deadlines[0]);
    let (panel, curves): (&str, Vec<(usize, f64, usize)>) = match spec.experiment {
        ExperimentKind::Fig4b => (
            "b",
            spec.d1
                .iter()
                .flat_map(|&d| spec.delta_sq.iter().map(move |&s| (base_nt, s, d)))
                .collect(),
        ),
        _ => (
            "a",
            spec.nt
                .iter()
                .flat_map(|&nt| spec.delta_sq.iter().map(move |&s| (nt, s, base_d1)))
                .collect(),
        ),
    };
    let points: Vec<(usize, f64, usize, f64)> = curves
        .iter()
        .flat_map(|&(nt, s, d)| spec.eps.iter().map(move |&e| (nt, s, d, e)))
        .collect();
    let tasks: Vec<(usize, u64)> = (0..points.len())
        .flat_map(|i| (0..spec.n_realizations as u64).map(move |r| (i, r)))
        .collect();
    let powers = par_map(tasks, jobs, |&(i, r)| {
        let (nt, delta_sq, d1, eps) = points[i];
        let mut cfg = base.clone();
        cfg.num_antennas = nt;
        cfg.delta_sq = delta_sq;
        cfg.deadlines[0] = d1;
        cfg.error_prob = vec![eps; cfg.num_robots];
        cfg.validate()?;
        let inst = Instance::generate(&cfg, r)?;
        Ok(solved_power(&solve(&inst, &cfg.solver)?))
    })?;
    Ok(points
        .iter()
        .zip(powers.chunks(spec.n_realizations))
        .map(|(&(nt, delta_sq, d1, eps), chunk)| {
            let ok: Vec<f64> = chunk.iter().copied().filter(|p| p.is_finite()).collect();
            let mean = if ok.is_empty() {
                f64::NAN
            } else {
                watts_to_dbm(ok.iter().sum::<f64>() / ok.len() as f64)
            };
            Fig4Row {
                panel: panel.into(),
                eps,
                nt,
                delta_sq,
                d1,
                mean_p_tot_dbm: mean,
                n_feasible: ok.len(),
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleGapRow {
    pub instance: u64,
    pub oracle_p_tot: f64,
    pub ncp_p_tot: f64,
    pub gap_percent: f64,
    pub both_infeasible: bool,
}

impl OracleGapRow {
    pub fn verdicts_agree(&self) -> bool {
        self.oracle_p_tot.is_finite() == self.ncp_p_tot.is_finite()
    }
}

/// NCP against exhaustive search on `instances` tiny scenarios.
pub fn run_oracle_gap(instances: usize, jobs: usize) -> Result<Vec<OracleGapRow>> {
    let tasks: Vec<u64> = (0..instances as u64).collect();
    par_map(tasks, jobs, |&i| {
        let cfg = tiny_config(i);
        let inst = Instance::generate(&cfg, 0)?;
        let oracle = exhaustive_optimum(&inst.gains, &cfg)?
            .p_tot()
            .unwrap_or(f64::INFINITY);
        let ncp = solved_power(&solve(&inst, &cfg.solver)?);
        let gap = if oracle.is_finite() && ncp.is_finite() {
            100.0 * (ncp - oracle) / oracle
        } else {
            f64::NAN
        };
        Ok(OracleGapRow {
            instance: i,
            oracle_p_tot: oracle,
            ncp_p_tot: ncp,
            gap_percent: gap,
            both_infeasible: oracle.is_infinite() && ncp.is_infinite(),
        })
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SingleReport {
    pub realization: u64,
    pub result: ScheduleResult,
    /// Present when the schedule was solved.
    pub validation: Option<ValidationReport>,
}

impl SingleReport {
    /// Assignment grid (rows = RBs, columns = symbols, `.` = unused, robots
    /// numbered from 1), followed by per-robot bit margins and totals.
    pub fn render(&self, config: &ScenarioConfig) -> String {
        use std::fmt::Write;
        let r = &self.result;
        let (m_rbs, n_sym, k_rob) = r.assignment.dim();
        let mut out = String::new();
        let _ = writeln!(out, "method      {}", r.method.label());
        let _ = writeln!(out, "status      {}", r.status.label());
        if let Some(d) = &r.detail {
            let _ = writeln!(out, "detail      {d}");
        }
        let _ = writeln!(out, "iterations  {}", r.iterations);
        let _ = writeln!(
            out,
            "p_tot       {:.6e} W ({:.3} dBm)",
            r.p_tot,
            watts_to_dbm(r.p_tot)
        );
        let _ = writeln!(out, "\nassignment (RB x symbol):");
        for m in 0..m_rbs {
            let _ = write!(out, "  RB{m:<3}");
            for n in 0..n_sym {
                let cell = (0..k_rob)
                    .find(|&k| r.assignment[[m, n, k]] > 0.5)
                    .map_or(".".to_string(), |k| (k + 1).to_string());
                let _ = write!(out, " {cell:>2}");
            }
            out.push('\n');
        }
        if let Some(v) = &self.validation {
            let _ = writeln!(out, "\nrobot  bits  delivered  margin");
            for (k, margin) in v.bits_margin.iter().enumerate() {
                let b = config.payload_bits[k];
                let _ = writeln!(out, "{:>5}  {:>4}  {:>9.3}  {:>6.3}", k + 1, b, b + margin, margin);
            }
            let _ = writeln!(out, "validation  {}", if v.passed() { "passed" } else { "FAILED" });
        }
        out
    }
}

pub fn run_single(config: &ScenarioConfig, realization: u64) -> Result<SingleReport> {
    let inst = Instance::generate(config, realization)?;
    let result = solve(&inst, &config.solver)?;
    let validation = if result.status == ScheduleStatus::Solved {
        Some(validate_schedule(&result, &inst.gains, config)?)
    } else {
        None
    };
    Ok(SingleReport {
        realization,
        result,
        validation,
    })
}

pub fn write_csv<T: Serialize>(rows: &[T], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

/// Runs the experiment and writes its output file into `out_dir`.
pub fn run_experiment(spec: &ExperimentSpec, out_dir: &Path, jobs: usize) -> Result<PathBuf> {
    spec.validate()?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let path = out_dir.join(spec.experiment.file_name());
    match spec.experiment {
        ExperimentKind::Fig2 => write_csv(&run_fig2(spec, jobs)?, &path)?,
        ExperimentKind::Fig3 => write_csv(&run_fig3(spec, jobs)?, &path)?,
        ExperimentKind::Fig4a | ExperimentKind::Fig4b => write_csv(&run_fig4(spec, jobs)?, &path)?,
        ExperimentKind::OracleGap => write_csv(&run_oracle_gap(spec.n_realizations, jobs)?, &path)?,
        ExperimentKind::Single => {
            let report = run_single(&spec.base_config()?, spec.realization)?;
            write_json(&report, &path)?
        }
    }
    Ok(path)
}
