//! Cooling and scattering rates of a single mode against energy, for a few
//! detunings on either side of the critical one.

use recool::analytic::{critical_energies, lamb_dicke_rate, peak_scattering_ratio, rates, CRITICAL_DETUNING};

fn main() -> recool::Result<()> {
    let r = 0.0018;
    for delta in [-3f64.sqrt(), -1.0, CRITICAL_DETUNING, -0.3] {
        let crit = critical_energies(delta, r)?;
        print!("delta = {delta:.4}: eps_c r = {:.4}", crit.eps_c * r);
        if let Some(es) = crit.eps_s {
            print!(", eps_s r = {:.4}, peak/steady = {:.4}", es * r, peak_scattering_ratio(delta)?);
        }
        println!();
        println!("  {:>10} {:>13} {:>13} {:>13}", "eps r", "de/dtau", "Lamb-Dicke", "dN/dtau");
        for k in 0..=8 {
            let x = 10f64.powf(-3.0 + 0.625 * k as f64);
            let p = rates(x / r, delta, r);
            println!("  {x:>10.4} {:>13.5e} {:>13.5e} {:>13.6}", p.de_dtau, lamb_dicke_rate(x / r, delta, r), p.dn_dtau);
        }
    }
    Ok(())
}
