use ndarray::Array3;
use num_complex::Complex64;
use proptest::prelude::*;

use robust_urllc::convex::{
    solve_p4, water_fill, BarrierSettings, Penalty, SubproblemSpec, SubproblemStatus,
};
use robust_urllc::model::{norm, worst_case_error, worst_case_gain};
use robust_urllc::oracle::{sampled_worst_snr, worst_error_for};
use robust_urllc::GainMatrix;

fn complex_vec(len: std::ops::Range<usize>) -> impl Strategy<Value = Vec<Complex64>> {
    proptest::collection::vec((-2.0f64..2.0, -2.0f64..2.0), len)
        .prop_map(|v| v.into_iter().map(|(re, im)| Complex64::new(re, im)).collect())
        .prop_filter("non-zero", |v: &Vec<Complex64>| norm(v) > 1e-3)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn worst_case_gain_monotone_and_scaling(
        h in complex_vec(1..6),
        d1 in 0.0f64..2.0, d2 in 0.0f64..2.0,
        grow in 1.0f64..3.0,
        pl in 1e-12f64..1e-6, sigma in 1e-16f64..1e-12, c in 0.1f64..10.0,
    ) {
        let (lo, hi) = if d1 < d2 { (d1, d2) } else { (d2, d1) };
        let g = |h: &[Complex64], d: f64| worst_case_gain(h, d, pl, sigma);
        prop_assert!(g(&h, hi) <= g(&h, lo) * (1.0 + 1e-12));
        let bigger: Vec<Complex64> = h.iter().map(|z| z * grow).collect();
        prop_assert!(g(&bigger, lo) >= g(&h, lo) * (1.0 - 1e-12));
        let base = g(&h, lo);
        let scaled_pl = worst_case_gain(&h, lo, c * pl, sigma);
        let scaled_sigma = worst_case_gain(&h, lo, pl, c * sigma);
        prop_assert!((scaled_pl - c * base).abs() <= 1e-12 * c * base.max(1e-300));
        prop_assert!((scaled_sigma - base / c).abs() <= 1e-12 * base.max(1e-300) / c);
    }

    #[test]
    fn closed_form_is_lower_bound_attained_at_worst_error(
        h in complex_vec(2..9),
        frac in 0.0f64..0.95,
        p in 0.01f64..5.0,
        seed in 0u64..1000,
    ) {
        let hn = norm(&h);
        let delta = frac * hn;
        let w: Vec<Complex64> = h.iter().map(|z| z * (p.sqrt() / hn)).collect();
        let closed = worst_case_gain(&h, delta, 1.0, 1.0) * p;
        let sampled = sampled_worst_snr(&h, delta, &w, 64, seed, false).unwrap();
        prop_assert!(sampled >= closed * (1.0 - 1e-12));
        let e = worst_case_error(&h, delta).unwrap();
        let at: f64 = h.iter().zip(&e).zip(&w)
            .map(|((h, e), w)| (h + e).conj() * w)
            .sum::<Complex64>()
            .norm_sqr();
        prop_assert!((at - closed).abs() <= 1e-12 * closed.max(1e-300));
    }

    #[test]
    fn matched_beamformer_maximizes_worst_case(
        h in complex_vec(2..6),
        u in complex_vec(2..6),
        frac in 0.0f64..0.95,
        p in 0.01f64..5.0,
    ) {
        prop_assume!(h.len() == u.len());
        let hn = norm(&h);
        let delta = frac * hn;
        let un = norm(&u);
        let w: Vec<Complex64> = u.iter().map(|z| z * (p.sqrt() / un)).collect();
        let worst_u = sampled_worst_snr(&h, delta, &w, 1, 0, true).unwrap();
        let matched = worst_case_gain(&h, delta, 1.0, 1.0) * p;
        prop_assert!(worst_u <= matched * (1.0 + 1e-12));
        prop_assert!(worst_u <= p * (hn + delta).powi(2));
        // the analytic minimizer stays inside the ball
        prop_assert!(norm(&worst_error_for(&h, delta, &w)) <= delta * (1.0 + 1e-12));
    }
}

fn spec_for(g: Array3<f64>, bits: Vec<f64>, pmax: f64) -> SubproblemSpec {
    let shape = g.dim();
    let k = shape.2;
    SubproblemSpec {
        gains: GainMatrix::new(g).unwrap(),
        payload_bits: bits,
        qinv: vec![3.719016485455680564; k],
        deadline_mask: Array3::from_elem(shape, true),
        phi_anchor: Array3::from_elem(shape, 1.0 / k as f64),
        l_anchor: vec![2.0; k],
        penalty: Penalty::None,
        pmax,
        settings: BarrierSettings::default(),
    }
}

fn seeded_gains(seed: u64, shape: (usize, usize, usize)) -> Array3<f64> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(seed);
    Array3::from_shape_simple_fn(shape, || 10f64.powf(rng.random_range(2.0..5.0)))
}

#[test]
fn relaxing_pmax_or_payload_never_raises_objective() {
    for seed in 0..8 {
        let g = seeded_gains(seed, (2, 3, 2));
        let base = solve_p4(&spec_for(g.clone(), vec![10.0, 6.0], 0.5)).unwrap();
        assert_eq!(base.status, SubproblemStatus::Optimal, "seed {seed}");
        let more_power = solve_p4(&spec_for(g.clone(), vec![10.0, 6.0], 2.0)).unwrap();
        let fewer_bits = solve_p4(&spec_for(g, vec![8.0, 6.0], 0.5)).unwrap();
        // a barrier solve is suboptimal by at most m/t, which the reported
        // residual bounds as m * kkt * |f| (m inequality constraints)
        let m = (2 * 12 + 6 + 2) as f64;
        let gap = |s: &robust_urllc::convex::SubproblemSolution| m * s.kkt_residual * s.objective.abs();
        for (name, relaxed) in [("pmax", &more_power), ("payload", &fewer_bits)] {
            assert_eq!(relaxed.status, SubproblemStatus::Optimal);
            assert!(
                relaxed.objective <= base.objective + gap(&base) + gap(relaxed),
                "seed {seed}, relaxed {name}: {} > {}",
                relaxed.objective,
                base.objective
            );
        }
    }
}

#[test]
fn fixed_assignment_matches_water_filling() {
    for seed in 0..6 {
        let g = seeded_gains(100 + seed, (2, 2, 2));
        // robot 0 owns RB row 0, robot 1 owns RB row 1
        let mask = Array3::from_shape_fn((2, 2, 2), |(m, _, k)| m == k);
        let mut spec = spec_for(g.clone(), vec![9.0, 5.0], 1.0);
        spec.deadline_mask = mask.clone();
        spec.qinv = vec![0.0, 0.0];
        spec.phi_anchor = mask.mapv(|b| if b { 1.0 } else { 0.0 });
        let sol = solve_p4(&spec).unwrap();
        assert_eq!(sol.status, SubproblemStatus::Optimal);
        for k in 0..2 {
            let gk: Vec<f64> = (0..2).map(|n| g[[k, n, k]]).collect();
            let wf = water_fill(&gk, spec.payload_bits[k], 1.0).unwrap();
            for n in 0..2 {
                let got = sol.p[[k, n, k]];
                assert!(
                    (got - wf[n]).abs() <= 1e-6 * wf.iter().sum::<f64>(),
                    "seed {seed} robot {k} symbol {n}: {got} vs {}",
                    wf[n]
                );
            }
        }
    }
}
