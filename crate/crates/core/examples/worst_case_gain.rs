//! Worst-case effective gain of one link under a bounded estimation error,
//! checked against random errors drawn on the boundary of the error ball.
//!
//! cargo run --example worst_case_gain

use num_complex::Complex64;
use robust_urllc::model::{generate_channels, noise_power, norm, path_loss_linear, worst_case_error, worst_case_gain};
use robust_urllc::oracle::sampled_worst_snr;
use robust_urllc::ScenarioConfig;

fn main() -> robust_urllc::Result<()> {
    let cfg = ScenarioConfig::table1();
    let channels = generate_channels(&cfg, 0);
    let h = channels.vector(0, 0, 0);
    let delta = cfg.delta();

    let pl = path_loss_linear(cfg.distance_m[0], cfg.pathloss)?;
    let sigma_sq = noise_power(cfg.noise_psd_dbm_hz, cfg.rb_bandwidth_hz);
    let g = worst_case_gain(&h, delta, pl, sigma_sq);
    println!("|h_hat| = {:.4}, delta = {delta:.4}", norm(&h));
    println!("path gain {pl:.3e}, noise {sigma_sq:.3e} W, worst-case gain {g:.3e} 1/W");

    // Matched beamformer at 10 mW; the worst error points straight against it.
    let p = 0.01;
    let w: Vec<Complex64> = h.iter().map(|z| z * (p / norm(&h).powi(2)).sqrt()).collect();
    let e = worst_case_error(&h, delta)?;
    println!("worst error norm {:.4}", norm(&e));

    let closed = worst_case_gain(&h, delta, 1.0, 1.0) * p;
    for n in [10, 1_000, 100_000] {
        let sampled = sampled_worst_snr(&h, delta, &w, n, 1, false)?;
        println!("{n:>7} random errors: min |(h+e)^H w|^2 = {sampled:.6e} (closed form {closed:.6e})");
    }
    let certified = sampled_worst_snr(&h, delta, &w, 1, 1, true)?;
    println!("with the analytic minimizer: {certified:.6e}");
    Ok(())
}
