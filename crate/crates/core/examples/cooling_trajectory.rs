//! Re-cooling of a 25Mg+ ion from 3.9 K: energy and fluorescence against
//! time, next to the hot-regime approximation, with and without recoil.

use recool::analytic::{cooling_time, critical_energies, integrate_trajectory};
use recool::scaling::{energy_to_kelvin, kelvin_to_energy, scale_parameters, PhysicalParams};

fn main() -> recool::Result<()> {
    let sp = scale_parameters(&PhysicalParams::mg25())?;
    let (delta, r) = (sp.delta, sp.r());
    let eps0 = kelvin_to_energy(3.9, &sp);
    let ec = critical_energies(delta, r)?.eps_c;
    let tau_end = cooling_time(eps0, 0.1 * ec, delta, r)?;
    println!("cooling from 3.9 K to 0.1 eps_c takes {:.3} ms", tau_end * sp.t0_s * 1e3);

    let grid: Vec<f64> = (0..=12).map(|k| tau_end * k as f64 / 12.0).collect();
    let plain = integrate_trajectory(eps0, &grid, delta, r, false)?;
    let recoil = integrate_trajectory(eps0, &grid, delta, r, true)?;
    let hot = |tau: f64| (eps0.powf(1.5) + 3.0 * delta * tau / (4.0 * r.sqrt())).max(0.0).powf(2.0 / 3.0);
    println!("{:>9} {:>10} {:>10} {:>10} {:>9}", "t [ms]", "T [K]", "hot [K]", "recoil [K]", "dN/dtau");
    for ((a, b), &tau) in plain.iter().zip(&recoil).zip(&grid) {
        println!(
            "{:>9.4} {:>10.4} {:>10.4} {:>10.5} {:>9.4}",
            tau * sp.t0_s * 1e3,
            energy_to_kelvin(a.eps, &sp),
            energy_to_kelvin(hot(tau), &sp),
            energy_to_kelvin(b.eps, &sp),
            a.dn_dtau
        );
    }
    Ok(())
}
