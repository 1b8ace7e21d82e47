use robust_urllc::model::worst_case_gain;
use robust_urllc::oracle::{exhaustive_optimum, sampled_worst_snr, tiny_config};
use robust_urllc::scheduler::{ncp_penalty, validate_schedule};
use robust_urllc::{solve, Instance, Method, ScenarioConfig, ScheduleStatus};

#[test]
fn ncp_exits_sparse_and_rounding_is_cheap() {
    let cfg = ScenarioConfig::table1();
    for r in 0..4 {
        let inst = Instance::generate(&cfg, r).unwrap();
        let res = solve(&inst, &cfg.solver).unwrap();
        assert_eq!(res.status, ScheduleStatus::Solved, "realization {r}");
        assert!(ncp_penalty(&res.relaxed_phi, 1.0) <= cfg.solver.epsilon_penalty);
        let relaxed = res.trajectory.last().unwrap().p_tot;
        assert!(
            (res.p_tot - relaxed).abs() <= 0.05 * relaxed,
            "realization {r}: {} vs relaxed {relaxed}",
            res.p_tot
        );
    }
}

#[test]
fn trajectory_bookkeeping() {
    let cfg = ScenarioConfig::table1();
    let inst = Instance::generate(&cfg, 7).unwrap();
    for method in [Method::Ncp, Method::ReweightedL1] {
        let opts = cfg.solver.clone().with_method(method);
        let res = solve(&inst, &opts).unwrap();
        assert_eq!(res.iterations, res.trajectory.len());
        for (i, rec) in res.trajectory.iter().enumerate() {
            assert_eq!(rec.iteration, i);
            assert_eq!(rec.lambda, opts.lambda0 * opts.eta.powi(i as i32));
        }
        let last = res.trajectory.last().unwrap();
        for k in 0..cfg.num_robots {
            let l: f64 = res.relaxed_phi.index_axis(ndarray::Axis(2), k).sum();
            assert!((last.blocklength[k] - l).abs() <= 1e-12 * l.max(1.0));
        }
    }
}

#[test]
fn solving_is_deterministic() {
    let cfg = ScenarioConfig::table1();
    let inst = Instance::generate(&cfg, 3).unwrap();
    let a = serde_json::to_string(&solve(&inst, &cfg.solver).unwrap()).unwrap();
    let b = serde_json::to_string(&solve(&inst, &cfg.solver).unwrap()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn oracle_bounds_every_validated_schedule() {
    for i in 0..20 {
        let cfg = tiny_config(i);
        let inst = Instance::generate(&cfg, 0).unwrap();
        let oracle = exhaustive_optimum(&inst.gains, &cfg).unwrap().p_tot();
        for method in [Method::Ncp, Method::ReweightedL1] {
            let res = solve(&inst, &cfg.solver.clone().with_method(method)).unwrap();
            if res.status != ScheduleStatus::Solved {
                continue;
            }
            assert!(validate_schedule(&res, &inst.gains, &cfg).unwrap().passed());
            let bound = oracle.expect("solved schedule implies a feasible instance");
            assert!(res.p_tot >= bound * (1.0 - 1e-9), "instance {i}: {} < {bound}", res.p_tot);
        }
    }
}

#[test]
fn recovered_beamformers_meet_closed_form_under_sampled_errors() {
    let cfg = ScenarioConfig::table1();
    let inst = Instance::generate(&cfg, 1).unwrap();
    let res = solve(&inst, &cfg.solver).unwrap();
    let w = res.beamformers.as_ref().unwrap();
    let channels = inst.channels.as_ref().unwrap();
    let mut checked = 0;
    for ((m, n, k), &p) in res.p.indexed_iter() {
        if p == 0.0 {
            continue;
        }
        let h = channels.vector(m, n, k);
        let wv: Vec<_> = (0..cfg.num_antennas).map(|t| w[[m, n, k, t]]).collect();
        let closed = worst_case_gain(&h, cfg.delta(), 1.0, 1.0) * p;
        let sampled = sampled_worst_snr(&h, cfg.delta(), &wv, 500, checked, false).unwrap();
        assert!(sampled >= closed * (1.0 - 1e-12));
        checked += 1;
    }
    assert!(checked > 0);
}

#[test]
fn impossible_demand_is_reported_infeasible() {
    let mut cfg = ScenarioConfig::table1();
    cfg.payload_bits = vec![4000.0; 4];
    cfg.pmax_watts = 1e-6;
    let inst = Instance::generate(&cfg, 0).unwrap();
    let res = solve(&inst, &cfg.solver).unwrap();
    assert_eq!(res.status, ScheduleStatus::Infeasible);
    assert!(res.detail.is_some());
}

