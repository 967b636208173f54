use std::sync::OnceLock;

use crate::error::{invalid, Result};
use crate::thermal::{build_cache, cooling_span, EnergyDistribution, PropagatorCache, ShiftWeights};

/// Relative step of the central difference in the thermal mean.
const FD_STEP: f64 = 1e-3;

/// Bins per cache used for design sweeps.
const DESIGN_BINS: f64 = 4000.0;

/// Reduced (`r = 1`) cache covering a thermal ensemble of mean `mean_eps_r`,
/// with about 4000 bins over its cooling span.
pub fn design_cache(delta: f64, mean_eps_r: f64) -> Result<PropagatorCache> {
    if !(mean_eps_r > 0.0) {
        return Err(invalid("mean_eps_r must be positive"));
    }
    let top = 14.5 * mean_eps_r * (1.0 + FD_STEP);
    let span = cooling_span(delta, 1.0, top)?;
    build_cache(delta, 1.0, span / DESIGN_BINS, top, false)
}

/// Fisher information per unit heating energy, `ε̄ ∫ (∂R̄/∂ε̄)² / R̄ dτ`.
fn information(mean_eps_r: f64, cache: &PropagatorCache) -> Result<f64> {
    let mean = mean_eps_r / cache.r;
    let rates = |m: f64| -> Result<Vec<f64>> {
        let sw = ShiftWeights::new(&EnergyDistribution::maxwell_boltzmann(m)?, cache)?;
        let n = cache.len_bins().max(1);
        let edges: Vec<f64> = (0..=n).map(|k| k as f64 * cache.dtau).collect();
        Ok(sw.photons_in_bins(cache, &edges).into_iter().map(|p| p / cache.dtau).collect())
    };
    let h = FD_STEP * mean;
    let (r0, rp, rm) = (rates(mean)?, rates(mean + h)?, rates(mean - h)?);
    let terms: Vec<f64> = (0..r0.len())
        .map(|i| {
            let d = (rp[i] - rm[i]) / (2.0 * h);
            if r0[i] > 0.0 {
                d * d / r0[i] * cache.dtau
            } else {
                0.0
            }
        })
        .collect();
    Ok(mean * crate::quadrature::pairwise_sum(&terms))
}

fn reference_information() -> Result<f64> {
    static REF: OnceLock<f64> = OnceLock::new();
    if let Some(v) = REF.get() {
        return Ok(*v);
    }
    let v = information(1.0, &design_cache(-1.0, 1.0)?)?;
    Ok(*REF.get_or_init(|| v))
}

/// Total measurement time needed for a fixed relative accuracy of the
/// heating rate, relative to the reference point `δ = -1, ε̄ r = 1, s → 0`.
///
/// Returns `+∞` when the trace carries no information on the mean energy.
pub fn measurement_time(delta: f64, mean_eps_r: f64, s: f64, cache: &PropagatorCache) -> Result<f64> {
    if !(mean_eps_r > 0.0) || !(s >= 0.0) {
        return Err(invalid("measurement_time needs mean_eps_r > 0 and s >= 0"));
    }
    if (cache.delta - delta).abs() > 1e-12 * delta.abs() {
        return Err(invalid("cache detuning differs from the requested one"));
    }
    let info = information(mean_eps_r, cache)?;
    if !(info > 0.0) || !info.is_finite() {
        return Ok(f64::INFINITY);
    }
    Ok((1.0 + s).sqrt() * reference_information()? / info)
}

/// `measurement_time` with a cache built for the requested point.
pub fn measurement_time_auto(delta: f64, mean_eps_r: f64, s: f64) -> Result<f64> {
    measurement_time(delta, mean_eps_r, s, &design_cache(delta, mean_eps_r)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_point_is_one() {
        let t = measurement_time_auto(-1.0, 1.0, 0.0).unwrap();
        assert!((t - 1.0).abs() < 1e-12, "{t}");
    }

    #[test]
    fn saturation_prefactor_is_exact() {
        let c = design_cache(-1.0, 2.0).unwrap();
        let a = measurement_time(-1.0, 2.0, 0.3, &c).unwrap();
        let b = measurement_time(-1.0, 2.0, 0.6, &c).unwrap();
        assert!((b / a - (1.6f64 / 1.3).sqrt()).abs() < 1e-14);
    }

    #[test]
    fn recoil_rescaling_is_invariant() {
        // Same ε̄ r, different r: the physical caches differ only in units.
        let c1 = design_cache(-1.0, 2.0).unwrap();
        let r = 0.003;
        let c2 = build_cache(-1.0, r, c1.dtau / r, c1.eps0_max / r, false).unwrap();
        let a = measurement_time(-1.0, 2.0, 0.0, &c1).unwrap();
        let b = measurement_time(-1.0, 2.0, 0.0, &c2).unwrap();
        assert!((a / b - 1.0).abs() < 1e-9, "{a} {b}");
    }
}
