use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use robust_urllc::harness::{self, ExperimentSpec};
use robust_urllc::ScenarioConfig;

#[derive(Parser)]
#[command(name = "urllc-sim", version, about = "Robust URLLC-OFDMA scheduling simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one channel realization of a scenario (preset name or TOML path).
    Solve {
        config: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Directory for the JSON dump.
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Run an experiment file and write its CSV/JSON output.
    Experiment {
        spec: PathBuf,
        /// Output directory; defaults to `out_dir` from the experiment file.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads (0 = one per core).
        #[arg(long, default_value_t = 0)]
        jobs: usize,
    },
    /// Compare the solver against exhaustive search on tiny instances.
    OracleGap {
        #[arg(long, default_value_t = 50)]
        instances: usize,
        #[arg(long, default_value_t = 0)]
        jobs: usize,
        /// Write `oracle_gap.csv` here instead of printing it.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print a bundled scenario as TOML.
    Presets { name: String },
}

fn run(cli: Cli) -> robust_urllc::Result<()> {
    match cli.command {
        Command::Solve { config, seed, out } => {
            let cfg = ScenarioConfig::load(&config)?;
            let report = harness::run_single(&cfg, seed)?;
            print!("{}", report.render(&cfg));
            std::fs::create_dir_all(&out).map_err(|e| robust_urllc::Error::Io { path: out.clone(), source: e })?;
            let path = out.join(format!("schedule_seed{seed}.json"));
            harness::write_json(&report, &path)?;
            println!("wrote {}", path.display());
        }
        Command::Experiment { spec, out, jobs } => {
            let spec = ExperimentSpec::load(&spec)?;
            let out = out.unwrap_or_else(|| spec.out_dir.clone());
            let path = harness::run_experiment(&spec, &out, jobs)?;
            println!("wrote {}", path.display());
        }
        Command::OracleGap { instances, jobs, out } => {
            let rows = harness::run_oracle_gap(instances, jobs)?;
            let mut gaps: Vec<f64> = rows.iter().map(|r| r.gap_percent).filter(|g| g.is_finite()).collect();
            gaps.sort_by(f64::total_cmp);
            let agree = rows.iter().filter(|r| r.verdicts_agree()).count();
            match out {
                Some(dir) => {
                    std::fs::create_dir_all(&dir).map_err(|e| robust_urllc::Error::Io { path: dir.clone(), source: e })?;
                    let path = dir.join("oracle_gap.csv");
                    harness::write_csv(&rows, &path)?;
                    eprintln!("wrote {}", path.display());
                }
                None => {
                    let mut w = csv::Writer::from_writer(std::io::stdout());
                    for r in &rows {
                        w.serialize(r)?;
                    }
                    w.flush().map_err(|e| robust_urllc::Error::Io { path: "<stdout>".into(), source: e })?;
                }
            }
            if !gaps.is_empty() {
                eprintln!(
                    "median gap {:.3}%  max gap {:.3}%  verdicts agree {agree}/{}",
                    gaps[gaps.len() / 2],
                    gaps[gaps.len() - 1],
                    rows.len()
                );
            }
        }
        Command::Presets { name } => print!("{}", ScenarioConfig::preset_source(&name)?),
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
