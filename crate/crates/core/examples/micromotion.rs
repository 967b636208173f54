//! RF micromotion: the sideband line profile, and the stable transverse energy
//! that appears once the drive frequency exceeds a threshold.

use recool::multimode::{find_stable_points, micromotion_profile, sideband_weights, Axis, ModeSet, Rate3dOptions};

fn main() -> recool::Result<()> {
    let beta = 2.0;
    let w = sideband_weights(beta);
    println!("beta = {beta}: J_n^2 = {:?}", w.iter().take(5).map(|v| (v * 1e4).round() / 1e4).collect::<Vec<_>>());
    println!("profile at Omega = 6:");
    for k in 0..=12 {
        let d = -12.0 + 2.0 * k as f64;
        println!("  {d:>6.1} {:.5}", micromotion_profile(d, beta, 6.0)?);
    }

    let opts = Rate3dOptions::default();
    println!("\nstable x energies at delta = -1 (other modes cold):");
    for om in [4.0, 4.3, 4.4, 5.0, 6.0, 8.0] {
        let m = ModeSet::new([0.0; 3], [1.0; 3], om)?;
        let pts = find_stable_points(&m, Axis::X, -1.0, 0.05, 100.0, 400, &opts)?;
        println!("  Omega = {om:>4.1}: {pts:.3?}");
    }
    Ok(())
}
