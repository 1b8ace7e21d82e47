//! Scenario configuration, channel generation and the worst-case gain
//! reduction.
//!
//! Channel estimates are small-scale only (unit-variance entries). Path loss
//! and noise are folded in when the [`GainMatrix`] is built, so the CSI error
//! bound `delta` always applies to the small-scale estimate:
//!
//! ```text
//! g[m][n][k] = PL_k * max(0, |h_hat| - delta)^2 / sigma^2
//! ```
//!
//! With the beamformer aligned to the estimate, the worst-case SNR at power
//! `p` is exactly `g * p`.

use std::path::Path;

use ndarray::{Array3, Array4};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scheduler::SolverOptions;

const TABLE1_TOML: &str = include_str!("../presets/table1.toml");

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub fn watts_to_dbm(watts: f64) -> f64 {
    10.0 * watts.log10() + 30.0
}

/// `a + b * log10(d)` path loss in dB.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathLossModel {
    pub intercept_db: f64,
    pub slope_db: f64,
}

/// Full problem description: dimensions, QoS targets, propagation and
/// solver settings. Powers are stored in watts.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub num_robots: usize,
    pub num_rbs: usize,
    pub num_symbols: usize,
    pub num_antennas: usize,
    pub pmax_watts: f64,
    pub rb_bandwidth_hz: f64,
    pub payload_bits: Vec<f64>,
    /// Deadline in OFDM symbols; robot `k` may only use symbols `n < deadlines[k]`.
    pub deadlines: Vec<usize>,
    pub error_prob: Vec<f64>,
    pub delta_sq: f64,
    pub noise_psd_dbm_hz: f64,
    pub distance_m: Vec<f64>,
    pub pathloss: PathLossModel,
    pub seed: u64,
    pub solver: SolverOptions,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(untagged)]
enum ScalarOrList<T> {
    Scalar(T),
    List(Vec<T>),
}

impl<T: Clone> ScalarOrList<T> {
    fn expand(&self, len: usize, field: &'static str) -> Result<Vec<T>> {
        match self {
            ScalarOrList::Scalar(v) => Ok(vec![v.clone(); len]),
            ScalarOrList::List(v) if v.len() == len => Ok(v.clone()),
            ScalarOrList::List(v) => Err(Error::config(
                field,
                format!("expected {len} entries (one per robot), got {}", v.len()),
            )),
        }
    }
}

/// On-disk layout. Key names follow the usual symbol names; `Pmax` is in dBm,
/// `N0` in dBm/Hz and `W` in Hz.
#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    #[serde(rename = "K")]
    k: usize,
    #[serde(rename = "M")]
    m: usize,
    #[serde(rename = "N")]
    n: usize,
    #[serde(rename = "Nt")]
    nt: usize,
    #[serde(rename = "Pmax")]
    pmax_dbm: f64,
    #[serde(rename = "W")]
    w: f64,
    #[serde(rename = "B")]
    b: ScalarOrList<f64>,
    #[serde(rename = "D")]
    d: ScalarOrList<usize>,
    eps: ScalarOrList<f64>,
    delta_sq: f64,
    #[serde(rename = "N0")]
    n0: f64,
    dist: ScalarOrList<f64>,
    pathloss: [f64; 2],
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    solver: SolverOptions,
}

impl ScenarioConfig {
    /// The bundled simulation defaults (4 robots, 10 RBs x 6 symbols, 2 antennas).
    pub fn table1() -> Self {
        Self::from_toml_str(TABLE1_TOML, "<table1>").expect("bundled preset is valid")
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "table1" => Ok(Self::table1()),
            other => Err(Error::UnknownPreset(other.to_string())),
        }
    }

    pub fn preset_source(name: &str) -> Result<&'static str> {
        match name {
            "table1" => Ok(TABLE1_TOML),
            other => Err(Error::UnknownPreset(other.to_string())),
        }
    }

    /// Loads a preset by name (`table1`) or a TOML file by path.
    pub fn load(source: &str) -> Result<Self> {
        if let Ok(cfg) = Self::preset(source) {
            return Ok(cfg);
        }
        let path = Path::new(source);
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text, source)
    }

    pub fn from_toml_str(text: &str, origin: &str) -> Result<Self> {
        let file: ConfigFile = toml::from_str(text).map_err(|e| Error::Parse {
            path: origin.to_string(),
            message: e.to_string(),
        })?;
        let k = file.k;
        let cfg = ScenarioConfig {
            num_robots: k,
            num_rbs: file.m,
            num_symbols: file.n,
            num_antennas: file.nt,
            pmax_watts: dbm_to_watts(file.pmax_dbm),
            rb_bandwidth_hz: file.w,
            payload_bits: file.b.expand(k, "B")?,
            deadlines: file.d.expand(k, "D")?,
            error_prob: file.eps.expand(k, "eps")?,
            delta_sq: file.delta_sq,
            noise_psd_dbm_hz: file.n0,
            distance_m: file.dist.expand(k, "dist")?,
            pathloss: PathLossModel {
                intercept_db: file.pathloss[0],
                slope_db: file.pathloss[1],
            },
            seed: file.seed,
            solver: file.solver,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        let file = ConfigFile {
            k: self.num_robots,
            m: self.num_rbs,
            n: self.num_symbols,
            nt: self.num_antennas,
            pmax_dbm: watts_to_dbm(self.pmax_watts),
            w: self.rb_bandwidth_hz,
            b: ScalarOrList::List(self.payload_bits.clone()),
            d: ScalarOrList::List(self.deadlines.clone()),
            eps: ScalarOrList::List(self.error_prob.clone()),
            delta_sq: self.delta_sq,
            n0: self.noise_psd_dbm_hz,
            dist: ScalarOrList::List(self.distance_m.clone()),
            pathloss: [self.pathloss.intercept_db, self.pathloss.slope_db],
            seed: self.seed,
            solver: self.solver.clone(),
        };
        toml::to_string(&file).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.num_robots;
        for (field, v) in [
            ("K", k),
            ("M", self.num_rbs),
            ("N", self.num_symbols),
            ("Nt", self.num_antennas),
        ] {
            if v == 0 {
                return Err(Error::config(field, "must be at least 1"));
            }
        }
        let lens = [
            ("B", self.payload_bits.len()),
            ("D", self.deadlines.len()),
            ("eps", self.error_prob.len()),
            ("dist", self.distance_m.len()),
        ];
        for (field, len) in lens {
            if len != k {
                return Err(Error::config(field, format!("expected {k} entries, got {len}")));
            }
        }
        if !(self.pmax_watts > 0.0 && self.pmax_watts.is_finite()) {
            return Err(Error::config("Pmax", "must be a finite positive power"));
        }
        if !(self.rb_bandwidth_hz > 0.0) {
            return Err(Error::config("W", "must be positive"));
        }
        if !(self.delta_sq >= 0.0 && self.delta_sq.is_finite()) {
            return Err(Error::config("delta_sq", "must be finite and non-negative"));
        }
        if !self.noise_psd_dbm_hz.is_finite() {
            return Err(Error::config("N0", "must be finite"));
        }
        for &b in &self.payload_bits {
            if !(b > 0.0 && b.is_finite()) {
                return Err(Error::config("B", format!("payload must be positive, got {b}")));
            }
        }
        for &d in &self.deadlines {
            if d == 0 || d > self.num_symbols {
                return Err(Error::config(
                    "D",
                    format!("deadline {d} outside 1..={}", self.num_symbols),
                ));
            }
        }
        for &e in &self.error_prob {
            if !(e > 0.0 && e < 0.5) {
                return Err(Error::config("eps", format!("{e} outside (0, 0.5)")));
            }
        }
        for &d in &self.distance_m {
            if !(d > 0.0 && d.is_finite()) {
                return Err(Error::config("dist", format!("distance {d} must be positive")));
            }
        }
        self.solver.validate()?;
        Ok(())
    }

    pub fn delta(&self) -> f64 {
        self.delta_sq.sqrt()
    }

    pub fn noise_power_watts(&self) -> f64 {
        noise_power(self.noise_psd_dbm_hz, self.rb_bandwidth_hz)
    }

    pub fn path_gain(&self, robot: usize) -> Result<f64> {
        path_loss_linear(self.distance_m[robot], self.pathloss)
    }

    /// Whether robot `k` may use OFDM symbol `n` (0-based).
    pub fn within_deadline(&self, n: usize, k: usize) -> bool {
        n < self.deadlines[k]
    }

    pub fn grid_shape(&self) -> (usize, usize, usize) {
        (self.num_rbs, self.num_symbols, self.num_robots)
    }
}

/// Linear gain of the `a + b log10(d)` dB path-loss model.
pub fn path_loss_linear(distance_m: f64, model: PathLossModel) -> Result<f64> {
    if !(distance_m > 0.0) {
        return Err(Error::NonPositiveDistance(distance_m));
    }
    let loss_db = model.intercept_db + model.slope_db * distance_m.log10();
    Ok(10f64.powf(-loss_db / 10.0))
}

/// Noise power in watts over one RB: `N0 * W`.
pub fn noise_power(psd_dbm_per_hz: f64, bandwidth_hz: f64) -> f64 {
    10f64.powf((psd_dbm_per_hz + 10.0 * bandwidth_hz.log10() - 30.0) / 10.0)
}

pub fn norm(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Worst-case effective gain `pl * max(0, |h_hat| - delta)^2 / sigma_sq`.
pub fn worst_case_gain(hhat: &[Complex64], delta: f64, pl: f64, sigma_sq: f64) -> f64 {
    let margin = (norm(hhat) - delta).max(0.0);
    pl * margin * margin / sigma_sq
}

/// The error vector `-delta * h_hat / |h_hat|` that attains the worst case for a
/// beamformer aligned with the estimate.
pub fn worst_case_error(hhat: &[Complex64], delta: f64) -> Result<Vec<Complex64>> {
    let nrm = norm(hhat);
    if nrm == 0.0 {
        return Err(Error::ZeroChannel);
    }
    Ok(hhat.iter().map(|z| -z * (delta / nrm)).collect())
}

/// Small-scale channel estimates `h_hat[m][n][k]`, each a length-`Nt` vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelSet {
    /// Shape `(M, N, K, Nt)`.
    pub hhat: Array4<Complex64>,
    pub seed: u64,
    pub realization: u64,
}

impl ChannelSet {
    pub fn vector(&self, m: usize, n: usize, k: usize) -> Vec<Complex64> {
        self.hhat
            .slice(ndarray::s![m, n, k, ..])
            .iter()
            .copied()
            .collect()
    }
}

/// Draws i.i.d. CN(0, 1) small-scale estimates. Realization `r` uses ChaCha20
/// stream `r` under key `config.seed`, so any realization can be regenerated
/// independently of the others.
pub fn generate_channels(config: &ScenarioConfig, realization: u64) -> ChannelSet {
    let mut rng = ChaCha20Rng::seed_from_u64(config.seed);
    rng.set_stream(realization);
    let normal = Normal::new(0.0, std::f64::consts::FRAC_1_SQRT_2).expect("valid std dev");
    let shape = (
        config.num_rbs,
        config.num_symbols,
        config.num_robots,
        config.num_antennas,
    );
    // Array4::from_shape_simple_fn fills in logical (row-major) order.
    let hhat = Array4::from_shape_simple_fn(shape, || {
        let re = normal.sample(&mut rng);
        let im = normal.sample(&mut rng);
        Complex64::new(re, im)
    });
    ChannelSet {
        hhat,
        seed: config.seed,
        realization,
    }
}

/// Worst-case effective gains `g[m][n][k]` in 1/W.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainMatrix {
    pub g: Array3<f64>,
}

impl GainMatrix {
    pub fn new(g: Array3<f64>) -> Result<Self> {
        if let Some(&bad) = g.iter().find(|v| !(**v >= 0.0 && v.is_finite())) {
            return Err(Error::NegativeEntry {
                what: "gain matrix",
                value: bad,
            });
        }
        Ok(GainMatrix { g })
    }

    pub fn from_channels(config: &ScenarioConfig, channels: &ChannelSet) -> Result<Self> {
        let (m_rbs, n_sym, k_rob) = config.grid_shape();
        let sigma_sq = config.noise_power_watts();
        let delta = config.delta();
        let pl: Vec<f64> = (0..k_rob)
            .map(|k| config.path_gain(k))
            .collect::<Result<_>>()?;
        let mut g = Array3::zeros((m_rbs, n_sym, k_rob));
        for ((m, n, k), v) in g.indexed_iter_mut() {
            let h = channels.hhat.slice(ndarray::s![m, n, k, ..]);
            let h = h.as_slice().expect("contiguous channel vector");
            *v = worst_case_gain(h, delta, pl[k], sigma_sq);
        }
        Ok(GainMatrix { g })
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        let s = self.g.shape();
        (s[0], s[1], s[2])
    }

    pub fn get(&self, m: usize, n: usize, k: usize) -> f64 {
        self.g[[m, n, k]]
    }
}

/// A configured problem ready to schedule. Channels are optional so that
/// hand-built gain matrices can be solved directly; beamformers are only
/// recovered when channels are present.
#[derive(Debug, Clone)]
pub struct Instance {
    pub config: ScenarioConfig,
    pub channels: Option<ChannelSet>,
    pub gains: GainMatrix,
}

impl Instance {
    pub fn generate(config: &ScenarioConfig, realization: u64) -> Result<Self> {
        config.validate()?;
        let channels = generate_channels(config, realization);
        let gains = GainMatrix::from_channels(config, &channels)?;
        Ok(Instance {
            config: config.clone(),
            channels: Some(channels),
            gains,
        })
    }

    pub fn from_gains(config: &ScenarioConfig, gains: GainMatrix) -> Result<Self> {
        config.validate()?;
        if gains.shape() != config.grid_shape() {
            return Err(Error::DimensionMismatch(format!(
                "gain matrix {:?} vs config {:?}",
                gains.shape(),
                config.grid_shape()
            )));
        }
        Ok(Instance {
            config: config.clone(),
            channels: None,
            gains,
        })
    }
}
