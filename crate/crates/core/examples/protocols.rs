//! Initial distributions other than thermal: a coherent kick on top of a
//! thermal ensemble, and parametric amplification of a cold one. Both
//! change the early fluorescence at equal mean energy.

use recool::analytic::{cooling_time, critical_energies};
use recool::thermal::{
    build_cache, default_dtau, make_excited_thermal, parametric_amplify, EnergyDistribution, SamplingOptions, ShiftWeights,
};

fn main() -> recool::Result<()> {
    let (delta, r) = (-3f64.sqrt(), 0.0018);
    let ec = critical_energies(delta, r)?.eps_c;
    let opts = SamplingOptions::default();

    // mean energy grows by (g^2 + g^-2)/2; pick g so it reaches 2 eps_c
    let gain = (4.0 + 15f64.sqrt()).sqrt();
    let kicked = make_excited_thermal(1.5 * ec, 0.5 * ec, opts)?;
    let amplified = parametric_amplify(&EnergyDistribution::maxwell_boltzmann(0.5 * ec)?, gain, opts)?;
    let thermal = EnergyDistribution::maxwell_boltzmann(2.0 * ec)?;
    let cases = [("thermal", thermal), ("kicked", kicked), ("amplified", amplified)];

    let top = 40.0 * cases.iter().map(|(_, d)| d.mean()).fold(0.0, f64::max);
    let cache = build_cache(delta, r, default_dtau(delta, r, top)?, top, false)?;
    let tau_end = cooling_time(4.0 * ec, 0.1 * ec, delta, r)?;
    let edges: Vec<f64> = (0..=8).map(|k| tau_end * k as f64 / 8.0).collect();
    let width = tau_end / 8.0;
    for (name, dist) in &cases {
        let photons = ShiftWeights::new(dist, &cache)?.photons_in_bins(&cache, &edges);
        let rel: Vec<String> = photons.iter().map(|n| format!("{:.3}", n / width / cache.steady_rate())).collect();
        println!("{name:>10} (mean {:.2} eps_c): {}", dist.mean() / ec, rel.join(" "));
    }
    Ok(())
}
