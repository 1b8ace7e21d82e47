//! Default scenario, a few channel draws: the nonconvex-penalty scheduler
//! against the reweighted-l1 baseline.
//!
//! cargo run --release --example compare_methods

use robust_urllc::model::watts_to_dbm;
use robust_urllc::{solve, Instance, Method, ScenarioConfig};

fn main() -> robust_urllc::Result<()> {
    let cfg = ScenarioConfig::table1();
    println!("{:>4}  {:>22}  {:>22}", "draw", "ncp dBm (iters)", "rw_l1 dBm (iters)");
    for r in 0..8 {
        let inst = Instance::generate(&cfg, r)?;
        let mut cells = vec![];
        for method in [Method::Ncp, Method::ReweightedL1] {
            let res = solve(&inst, &cfg.solver.clone().with_method(method))?;
            cells.push(format!("{:>8.3} ({:>2}) {:<10}", watts_to_dbm(res.p_tot), res.iterations, res.status.label()));
        }
        println!("{r:>4}  {}  {}", cells[0], cells[1]);
    }
    Ok(())
}
