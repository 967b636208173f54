//! Scaled units for the 25Mg+ parameter set, and the same set read back from
//! a parameter file.

use recool::analytic::critical_energies;
use recool::constants::BOLTZMANN;
use recool::scaling::{energy_to_kelvin, scale_parameters, PhysicalParams};

fn main() -> recool::Result<()> {
    let p = PhysicalParams::mg25();
    let sp = scale_parameters(&p)?;
    let r = sp.r();
    println!("E0/kB      = {:.4} mK", sp.e0_joule / BOLTZMANN * 1e3);
    println!("t0         = {:.2} ns", sp.t0_s * 1e9);
    println!("delta      = {:.4}", sp.delta);
    println!("r (x,y,z)  = {:.3e} {:.3e} {:.3e}", sp.recoil[0], sp.recoil[1], sp.recoil[2]);
    println!("E0/r       = {:.3} K", energy_to_kelvin(1.0 / r, &sp));

    let crit = critical_energies(sp.delta, r)?;
    println!("eps_c      = {:.4}/r ({:.3} K)", crit.eps_c * r, energy_to_kelvin(crit.eps_c, &sp));
    match crit.eps_s {
        Some(es) => println!("eps_s      = {:.4}/r", es * r),
        None => println!("eps_s      : none, the detuning is above the critical one"),
    }

    let text: String = p.to_key_values().iter().map(|(k, v)| format!("{k} = {v}\n")).collect();
    let back = PhysicalParams::from_config_str(&text)?;
    assert_eq!(scale_parameters(&back)?, sp);
    println!("\nparameter file:\n{text}");
    Ok(())
}
