//! One convex inner step on a hand-built instance: two robots, two RBs, two
//! symbols, solved with the interior-point method.
//!
//! cargo run --example inner_problem

use ndarray::{array, Array3};
use robust_urllc::convex::{linearized_rate, solve_p4, BarrierSettings, Penalty, SubproblemSpec};
use robust_urllc::fbl::q_inv;
use robust_urllc::GainMatrix;

fn main() -> robust_urllc::Result<()> {
    let g = array![
        [[4.0e3, 9.0e2], [2.5e3, 3.0e3]],
        [[6.0e2, 5.0e3], [1.2e3, 4.0e3]],
    ];
    let spec = SubproblemSpec {
        gains: GainMatrix::new(g)?,
        payload_bits: vec![12.0, 16.0],
        qinv: vec![q_inv(1e-6)?; 2],
        deadline_mask: Array3::from_elem((2, 2, 2), true),
        phi_anchor: Array3::from_elem((2, 2, 2), 0.5),
        l_anchor: vec![2.0, 2.0],
        penalty: Penalty::Ncp { lambda: 0.01 },
        pmax: 1.0,
        settings: BarrierSettings::default(),
    };
    let sol = solve_p4(&spec)?;
    println!("status {:?} after {} Newton steps, residual {:.1e}", sol.status, sol.newton_iterations, sol.kkt_residual);
    println!("objective {:.6e}, power {:.6e} W", sol.objective, sol.total_power());
    for ((m, n, k), phi) in sol.phi.indexed_iter() {
        println!("  RB{m} sym{n} robot{k}: phi {phi:.4}  p {:.4e}", sol.p[[m, n, k]]);
    }
    for k in 0..2 {
        let rate = linearized_rate(&spec, &sol.phi, &sol.p, k);
        println!("robot {k}: {rate:.4} bits for {} requested", spec.payload_bits[k]);
    }
    Ok(())
}
