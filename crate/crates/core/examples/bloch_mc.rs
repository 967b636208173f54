//! Optical-Bloch Monte Carlo of a weakly bound ion at low saturation, next to
//! the analytic thermal average it should reproduce.

use recool::analytic::{cooling_time, critical_energies};
use recool::bloch::{ensemble_fluorescence, EnsembleOptions, HeatingModel, InitialSampler};
use recool::scaling::{scale_parameters, PhysicalParams};
use recool::thermal::{build_cache, default_dtau, EnergyDistribution, ShiftWeights};

fn main() -> recool::Result<()> {
    let mut p = PhysicalParams::mg25();
    p.saturation = 0.05;
    p.k_projection = [0.0, 0.0, 1.0];
    p.secular_freqs_rad_s = [p.gamma_rad_s / 40.0, p.gamma_rad_s / 45.0, p.gamma_rad_s / 50.0];
    let sp = scale_parameters(&p)?;
    let (delta, r, t0) = (sp.delta, sp.r(), sp.t0_s);
    let ec = critical_energies(delta, r)?.eps_c;
    let dist = EnergyDistribution::maxwell_boltzmann(2.0 * ec)?;

    let top = 32.0 * ec;
    let cache = build_cache(delta, r, default_dtau(delta, r, top)?, top, false)?;
    let tau_end = cooling_time(6.0 * ec, 0.1 * ec, delta, r)?;
    let n_bins = 10;
    let edges: Vec<f64> = (0..=n_bins).map(|k| tau_end * k as f64 / n_bins as f64).collect();
    let width = tau_end / n_bins as f64;
    let analytic = ShiftWeights::new(&dist, &cache)?.photons_in_bins(&cache, &edges);

    let sampler = InitialSampler::thermal(dist, HeatingModel::AxialOnly, &p)?;
    let opts = EnsembleOptions { n_traj: 20, seed: 1, duration_s: tau_end * t0, n_bins, dt_s: Some(0.1 / p.gamma_rad_s) };
    let mc = ensemble_fluorescence(&sampler, &p, &opts)?;
    println!("{} trajectories, dt = {:.2e} s", mc.n_traj, mc.dt_s);
    println!("{:>9} {:>12} {:>12} {:>10}", "t [us]", "analytic", "Monte Carlo", "stderr");
    for k in 0..n_bins {
        println!(
            "{:>9.2} {:>12.4e} {:>12.4e} {:>10.2e}",
            mc.t_s[k] * 1e6,
            analytic[k] / width / t0,
            mc.mean_rate_hz[k],
            mc.stderr_hz[k]
        );
    }
    Ok(())
}
