//! Run an experiment file and print the resulting CSV.
//!
//! cargo run --release --example run_experiment -- crates/core/examples/configs/quick_fig2.toml

use robust_urllc::harness::{run_experiment, ExperimentSpec};

fn main() -> robust_urllc::Result<()> {
    let path = std::env::args()
        .nth(1)
        .unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/examples/configs/quick_fig2.toml").into());
    let spec = ExperimentSpec::load(&path)?;
    let out = std::env::temp_dir().join("urllc-example");
    let written = run_experiment(&spec, &out, 0)?;
    println!("{}", written.display());
    print!("{}", std::fs::read_to_string(&written).map_err(|e| robust_urllc::Error::Io { path: written.clone(), source: e })?);
    Ok(())
}
