use std::fs;

use robust_urllc::harness::{run_experiment, run_single, ExperimentKind, ExperimentSpec};
use robust_urllc::{ScenarioConfig, ScheduleStatus};

/// Bundled `table1` preset, realization 0, as measured after the solver settled.
const TABLE1_SEED0_P_TOT: f64 = 2.54624863178565;

#[test]
fn table1_seed0_snapshot() {
    let cfg = ScenarioConfig::table1();
    let report = run_single(&cfg, 0).unwrap();
    assert_eq!(report.result.status, ScheduleStatus::Solved);
    assert_eq!(report.result.iterations, 10);
    let rel = (report.result.p_tot - TABLE1_SEED0_P_TOT).abs() / TABLE1_SEED0_P_TOT;
    assert!(rel <= 1e-9, "p_tot {}", report.result.p_tot);
    let v = report.validation.unwrap();
    assert!(v.passed());
    assert!(v.bits_margin.iter().all(|&m| m >= 0.0));
}

#[test]
fn scaled_demand_reports_infeasible() {
    let mut cfg = ScenarioConfig::table1();
    cfg.payload_bits.iter_mut().for_each(|b| *b *= 100.0);
    cfg.pmax_watts = 1e-3;
    let report = run_single(&cfg, 0).unwrap();
    assert_eq!(report.result.status, ScheduleStatus::Infeasible);
    assert!(report.validation.is_none());
    assert!(report.render(&cfg).contains("status      infeasible"));
}

#[test]
fn every_csv_matches_its_schema() {
    let dir = tempfile::tempdir().unwrap();
    let kinds = [
        (ExperimentKind::Fig2, 2),
        (ExperimentKind::Fig3, 1),
        (ExperimentKind::Fig4a, 1),
        (ExperimentKind::Fig4b, 1),
        (ExperimentKind::OracleGap, 3),
    ];
    for (kind, n) in kinds {
        let mut spec = ExperimentSpec::new(kind);
        spec.n_realizations = n;
        spec.eps = vec![1e-5];
        spec.lambda0 = vec![0.01];
        spec.eta = vec![1.8];
        let path = run_experiment(&spec, dir.path(), 1).unwrap();
        let mut reader = csv::Reader::from_path(&path).unwrap();
        let header: Vec<String> = reader.headers().unwrap().iter().map(str::to_string).collect();
        assert_eq!(header, kind.csv_columns().unwrap(), "{kind:?}");
        let rows = reader.records().map(|r| r.unwrap()).collect::<Vec<_>>();
        let expected = match kind {
            ExperimentKind::Fig2 => 2 * n,
            ExperimentKind::Fig4a | ExperimentKind::Fig4b => 4,
            ExperimentKind::OracleGap => n,
            _ => rows.len().max(1),
        };
        assert_eq!(rows.len(), expected, "{kind:?}");
        // numeric columns parse as floats, including inf and NaN markers
        for row in &rows {
            for (name, field) in header.iter().zip(row.iter()) {
                if !matches!(name.as_str(), "method" | "status" | "panel" | "both_infeasible") {
                    field.parse::<f64>().unwrap_or_else(|_| panic!("{name} = {field}"));
                }
            }
        }
    }
    assert_eq!(ExperimentKind::Single.csv_columns(), None);
}

#[test]
fn spec_file_resolves_relative_base_config() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ScenarioConfig::table1();
    cfg.num_rbs = 2;
    cfg.payload_bits = vec![8.0; 4];
    fs::write(dir.path().join("small.toml"), cfg.to_toml_string()).unwrap();
    let spec_path = dir.path().join("single.toml");
    fs::write(&spec_path, "experiment = \"single\"\nbase = \"small.toml\"\nrealization = 2\n").unwrap();
    let spec = ExperimentSpec::load(&spec_path).unwrap();
    assert_eq!(spec.base_config().unwrap(), cfg);
    let out = dir.path().join("out");
    let first = fs::read(run_experiment(&spec, &out, 1).unwrap()).unwrap();
    let second = fs::read(run_experiment(&spec, &out, 2).unwrap()).unwrap();
    assert_eq!(first, second);
    let json: serde_json::Value = serde_json::from_slice(&first).unwrap();
    assert_eq!(json["realization"], 2);
    assert_eq!(json["result"]["status"], "solved");
}

#[test]
fn malformed_spec_names_the_problem() {
    let err = ExperimentSpec::from_toml_str("experiment = \"fig2\"\nn_realizations = -3", "bad.toml").unwrap_err();
    assert!(err.to_string().contains("bad.toml"), "{err}");
    let err = ExperimentSpec::from_toml_str("experiment = \"fig4a\"\nnt = [0]", "x").unwrap_err();
    assert!(err.to_string().contains("nt"), "{err}");
}
