//! Exhaustive search on tiny instances as ground truth for the scheduler.
//!
//! cargo run --release --example oracle_check

use robust_urllc::oracle::{exhaustive_optimum, tiny_config, OracleOutcome};
use robust_urllc::{solve, Instance, ScheduleStatus};

fn main() -> robust_urllc::Result<()> {
    for i in 0..10 {
        let cfg = tiny_config(i);
        let inst = Instance::generate(&cfg, 0)?;
        let res = solve(&inst, &cfg.solver)?;
        match exhaustive_optimum(&inst.gains, &cfg)? {
            OracleOutcome::Optimal { p_tot, assignment, .. } => {
                let used = assignment.iter().filter(|&&a| a > 0.5).count();
                let gap = if res.status == ScheduleStatus::Solved {
                    format!("{:+.3}%", 100.0 * (res.p_tot - p_tot) / p_tot)
                } else {
                    res.status.label().to_string()
                };
                println!("instance {i}: optimum {p_tot:.5e} W on {used} RBs, solver gap {gap}");
            }
            OracleOutcome::Infeasible => {
                println!("instance {i}: infeasible (solver says {})", res.status.label());
            }
        }
    }
    Ok(())
}
