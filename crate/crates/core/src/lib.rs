//! Minimum-power resource-block assignment, power control and beamforming for
//! downlink multi-antenna URLLC-OFDMA with bounded channel-estimation error.
//!
//! The pipeline is: [`model`] builds worst-case gains from channel estimates,
//! [`scheduler`] runs penalized successive convex approximation over relaxed
//! assignments (each step solved by [`convex`]), then rounds, refits and
//! validates. [`oracle`] provides brute-force ground truth for tiny instances,
//! and [`harness`] runs the Monte-Carlo experiments that write CSV files.

pub mod convex;
pub mod error;
pub mod fbl;
pub mod harness;
pub mod model;
pub mod oracle;
pub mod scheduler;

pub use error::{Error, Result};
pub use model::{GainMatrix, Instance, ScenarioConfig};
pub use scheduler::{solve, solve_ncp, solve_rw_l1, Method, ScheduleResult, ScheduleStatus, SolverOptions};
