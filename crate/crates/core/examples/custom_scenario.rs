//! Load a scenario file, schedule it, and inspect the result.
//!
//! cargo run --example custom_scenario -- crates/core/examples/configs/small_cell.toml

use robust_urllc::harness::run_single;
use robust_urllc::ScenarioConfig;

fn main() -> robust_urllc::Result<()> {
    let path = std::env::args()
        .nth(1)
        .unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/examples/configs/small_cell.toml").into());
    let cfg = ScenarioConfig::load(&path)?;
    println!("{} robots, {} RBs x {} symbols, {} antennas", cfg.num_robots, cfg.num_rbs, cfg.num_symbols, cfg.num_antennas);
    let report = run_single(&cfg, 0)?;
    print!("{}", report.render(&cfg));
    if let Some(w) = &report.result.beamformers {
        let (m, n, k, _) = w.dim();
        println!("beamformers: {m} x {n} x {k} vectors of length {}", cfg.num_antennas);
    }
    Ok(())
}
