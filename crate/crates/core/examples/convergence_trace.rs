//! Outer-iteration trace: relaxed power, sparsity measure and penalty weight
//! for a few penalty schedules on one channel draw.
//!
//! cargo run --release --example convergence_trace

use robust_urllc::{solve, Instance, ScenarioConfig};

fn main() -> robust_urllc::Result<()> {
    let cfg = ScenarioConfig::table1();
    let inst = Instance::generate(&cfg, 0)?;
    for (lambda0, eta) in [(0.001, 1.4), (0.01, 1.8), (0.1, 2.5)] {
        let mut opts = cfg.solver.clone();
        opts.lambda0 = lambda0;
        opts.eta = eta;
        let res = solve(&inst, &opts)?;
        println!("lambda0 {lambda0}, eta {eta}: {} after {} iterations", res.status.label(), res.iterations);
        for t in &res.trajectory {
            println!("  {:>3}  p {:.6}  F {:.3e}  lambda {:.4}", t.iteration, t.p_tot, t.penalty, t.lambda);
        }
        println!("  final (rounded, refit) p {:.6}", res.p_tot);
    }
    Ok(())
}
