//! Short-packet rate: how many bits fit in a handful of RBs at a target
//! packet error probability, and how that changes with reliability.
//!
//! cargo run --example finite_blocklength

use robust_urllc::fbl::{achievable_bits, exact_dispersion_bits, q_inv};

fn main() -> robust_urllc::Result<()> {
    let snr = [12.0, 30.0, 8.0, 20.0];
    let full = [1.0; 4];
    let shannon: f64 = snr.iter().map(|s| (1.0f64 + s).log2()).sum();
    println!("4 RBs, SNRs {snr:?}: Shannon capacity {shannon:.3} bits");
    println!("{:>8}  {:>9}  {:>10}  {:>12}", "eps", "Q^-1", "V=1 bits", "exact V bits");
    for eps in [1e-3, 1e-5, 1e-7, 1e-9] {
        let q = q_inv(eps)?;
        let unit = achievable_bits(&full, &snr, q)?;
        let exact = exact_dispersion_bits(&full, &snr, q)?;
        println!("{eps:>8.0e}  {q:>9.6}  {unit:>10.3}  {exact:>12.3}");
    }

    // Fractional shares, as seen by the relaxed scheduler.
    let q = q_inv(1e-6)?;
    for share in [0.25, 0.5, 1.0] {
        let bits = achievable_bits(&[share; 4], &snr, q)?;
        println!("share {share:.2} of each RB: {bits:.3} bits");
    }
    Ok(())
}
