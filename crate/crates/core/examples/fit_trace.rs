//! Synthetic re-cooling traces after three heating periods, fitted for the
//! initial temperature, then the heating rate from the three fits.

use recool::estimation::{
    fit_mean_energy, heating_rate_from_fits, simulate_trace, FitOptions, FitOutcome, SimulationOptions,
};
use recool::scaling::{kelvin_to_energy, scale_parameters, PhysicalParams};
use recool::thermal::{build_cache, default_dtau, EnergyDistribution};

fn main() -> recool::Result<()> {
    let sp = scale_parameters(&PhysicalParams::mg25())?;
    let (delta, r) = (sp.delta, sp.r());
    let bin_width = 2e-5;
    let top = 14.0 * 20.0 / r;
    let cache = build_cache(delta, r, default_dtau(delta, r, top)?.max(bin_width / sp.t0_s / 10.0), top, false)?;

    let heating_k_per_s = 0.16;
    let mut fits = Vec::new();
    for (i, duration) in [5.0, 15.0, 25.0].into_iter().enumerate() {
        let truth = heating_k_per_s * duration;
        let dist = EnergyDistribution::maxwell_boltzmann(kelvin_to_energy(truth, &sp))?;
        let opts = SimulationOptions {
            n_bins: 300,
            bin_width_s: bin_width,
            n_cycles: 400,
            detection_efficiency: 1e-3,
            dark_rate_hz: 500.0,
            seed: Some(100 + i as u64),
        };
        let mut trace = simulate_trace(&dist, &cache, &sp, &opts)?;
        trace.heat_duration_s = Some(duration);
        match fit_mean_energy(&trace, &sp, &cache, &FitOptions::default())? {
            FitOutcome::Estimate(f) => {
                println!(
                    "{duration:>4} s heating: {:.3} ± {:.3} K (truth {truth:.2} K, Fisher-only ± {:.3} K)",
                    f.temperature_k,
                    f.sigma_k,
                    f.sigma_fisher * f.sigma_k / f.sigma
                );
                fits.push((duration, f));
            }
            FitOutcome::BelowSensitivity(l) => println!("{duration:>4} s heating: below {:.3} K", l.upper_bound_k),
        }
    }
    let h = heating_rate_from_fits(&fits, None)?;
    println!("heating rate {:.4} ± {:.4} K/s (truth {heating_k_per_s})", h.rate_k_per_s, h.sigma_k_per_s);
    Ok(())
}
