//! Three-dimensional cooling: a cold axial mode is heated by a hot transverse
//! spectator, and the coupled mode energies evolve toward equal Doppler widths.

use recool::multimode::{cooling_rate_3d, effective_profile, evolve_modes, Axis, EvolveOptions, ModeSet, Rate3dOptions};

fn main() -> recool::Result<()> {
    let opts = Rate3dOptions::default();
    let delta = -1.0;
    let m = ModeSet::from_dmax([0.0, 4.0, 0.1], 0.0)?;
    println!("dmax = (0, 4, 0.1): d eps_z/dtau = {:+.4e}", cooling_rate_3d(&m, Axis::Z, delta, &opts)?);
    println!("                    d eps_y/dtau = {:+.4e}", cooling_rate_3d(&m, Axis::Y, delta, &opts)?);

    let prof = effective_profile(0.0, 4.0)?;
    println!("\nline profile seen by z with a dmax = 4 spectator:");
    for (d, v) in prof.tabulate(8.0, 9) {
        println!("  {d:>6.2} {v:.4}");
    }

    let start = ModeSet::new([1e-3, 20.0, 1e-3], [1.0; 3], 0.0)?;
    let grid: Vec<f64> = (0..=8).map(|k| 16.0 * k as f64).collect();
    let traj = evolve_modes(&start, delta, &grid, &EvolveOptions::default())?;
    println!("\n{:>6} {:>10} {:>10} {:>10}", "tau", "eps_x r", "eps_y r", "eps_z r");
    for (t, e) in grid.iter().zip(&traj) {
        println!("{t:>6.1} {:>10.4} {:>10.4} {:>10.4}", e[0], e[1], e[2]);
    }
    Ok(())
}
