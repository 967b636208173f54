//! Thermally averaged fluorescence during re-cooling, for a detuning below
//! and one at the critical value. Below it, a hot ensemble starts brighter
//! than the steady state.

use recool::analytic::{cooling_time, critical_energies};
use recool::thermal::{build_cache, default_dtau, photon_budget, EnergyDistribution, ShiftWeights};

fn main() -> recool::Result<()> {
    let r = 0.0018;
    for delta in [-3f64.sqrt(), -1.0 / 3f64.sqrt()] {
        let ec = critical_energies(delta, r)?.eps_c;
        println!("delta = {delta:.4}, eps_c r = {:.3}", ec * r);
        println!("  {:>10} {:>9} {:>9} {:>9}", "tau r", "1 ec", "2 ec", "4 ec");
        let mut columns = Vec::new();
        let tau_end = cooling_time(4.0 * ec, 0.1 * ec, delta, r)?;
        for factor in [1.0, 2.0, 4.0] {
            let mean = factor * ec;
            let top = 16.0 * 4.0 * ec;
            let cache = build_cache(delta, r, default_dtau(delta, r, top)?, top, false)?;
            let dist = EnergyDistribution::maxwell_boltzmann(mean)?;
            let edges: Vec<f64> = (0..=10).map(|k| tau_end * k as f64 / 10.0).collect();
            let photons = ShiftWeights::new(&dist, &cache)?.photons_in_bins(&cache, &edges);
            let width = tau_end / 10.0;
            columns.push(photons.iter().map(|n| n / width / cache.steady_rate()).collect::<Vec<_>>());
            if factor == 4.0 {
                let budget = photon_budget(&dist, &cache, ec)?;
                println!("  photons while a 4 eps_c ensemble cools to eps_c: {budget:.0} (eps/|delta| = {:.0})", mean / delta.abs());
            }
        }
        for k in 0..10 {
            let tau = (k as f64 + 0.5) * tau_end / 10.0;
            println!("  {:>10.2} {:>9.4} {:>9.4} {:>9.4}", tau * r, columns[0][k], columns[1][k], columns[2][k]);
        }
        println!("  (rates relative to the steady state)\n");
    }
    Ok(())
}
