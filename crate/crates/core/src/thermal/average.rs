use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cache::PropagatorCache;
use super::distribution::EnergyDistribution;
use crate::error::{invalid, Error, Result};
use crate::quadrature::pairwise_sum;

/// Largest distribution mass allowed above the top of the cache.
const MAX_MASS_ABOVE: f64 = 1e-6;

/// Thermal bin weights below this are dropped; their total stays far below
/// the normalisation tolerance.
const NEGLIGIBLE_WEIGHT: f64 = 1e-20;

/// Ensemble-averaged scattering rate over one bin, centred at `tau`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AveragedPoint {
    pub tau: f64,
    pub rate: f64,
}

/// A distribution mapped onto the cached trajectory: an atom starting at
/// energy `ε` behaves like the cached atom shifted by the time it takes the
/// latter to reach `ε`.
#[derive(Clone, Debug, PartialEq)]
pub struct ShiftWeights {
    pub shifts: Vec<f64>,
    pub weights: Vec<f64>,
    /// The first `dense` entries sit at consecutive bin centres
    /// `(m + 1/2) Δτ` from `m = dense_start`, which allows a lag-indexed sum.
    dense: usize,
    dense_start: usize,
}

impl ShiftWeights {
    pub fn new(dist: &EnergyDistribution, cache: &PropagatorCache) -> Result<Self> {
        let nb = cache.len_bins();
        let dtau = cache.dtau;
        let g = &cache.eps_grid;
        let mut shifts = Vec::new();
        let mut weights = Vec::new();
        let mut above = 0.0;
        let mut dense = 0;
        let mut dense_start = 0;
        match dist {
            EnergyDistribution::MaxwellBoltzmann { mean } => {
                // Bins above the last non-negligible weight are dropped; the
                // remaining run stays contiguous.
                let first = (0..nb)
                    .find(|&m| (-g[m] / mean).exp() * (g[m] - g[m + 1]) / mean > NEGLIGIBLE_WEIGHT)
                    .unwrap_or(nb);
                let mut run = Vec::with_capacity(nb - first);
                for m in first..nb {
                    let width = g[m] - g[m + 1];
                    let centre = 0.5 * (g[m] + g[m + 1]);
                    run.push(2.0 * (-centre / mean).exp() * (0.5 * width / mean).sinh());
                }
                dense = run.len();
                dense_start = first;
                shifts.extend((first..nb).map(|m| (m as f64 + 0.5) * dtau));
                weights.extend(run);
                shifts.push(nb as f64 * dtau);
                weights.push(-(-g[nb] / mean).exp_m1());
                above = (-g[0] / mean).exp();
            }
            EnergyDistribution::PointMass { eps0 } => match cache.locate(*eps0) {
                Some((m, th)) => {
                    shifts.push((m as f64 + th) * dtau);
                    weights.push(1.0);
                }
                None => above = 1.0,
            },
            EnergyDistribution::Empirical { samples, weights: ws } => {
                let mut bin_w = vec![0.0; nb + 1];
                let mut bin_wt = vec![0.0; nb + 1];
                for (&e, &w) in samples.iter().zip(ws) {
                    match cache.locate(e) {
                        Some((m, th)) => {
                            bin_w[m] += w;
                            bin_wt[m] += w * th;
                        }
                        None => above += w,
                    }
                }
                for m in 0..=nb {
                    if bin_w[m] > 0.0 {
                        shifts.push((m as f64 + bin_wt[m] / bin_w[m]) * dtau);
                        weights.push(bin_w[m]);
                    }
                }
            }
        }
        if above > MAX_MASS_ABOVE {
            return Err(Error::CacheTooShort { mass: above, eps0_max: cache.eps0_max });
        }
        if above > 0.0 {
            shifts.push(0.0);
            weights.push(above);
        }
        Ok(ShiftWeights { shifts, weights, dense, dense_start })
    }

    pub fn total_weight(&self) -> f64 {
        pairwise_sum(&self.weights)
    }

    /// Expected photons per atom scattered during `[a, b]` after the start of
    /// cooling.
    pub fn photons_between(&self, cache: &PropagatorCache, a: f64, b: f64) -> f64 {
        let mut acc = 0.0;
        for (&s, &w) in self.shifts.iter().zip(&self.weights) {
            acc += w * (cache.photons_until(s + b) - cache.photons_until(s + a));
        }
        acc
    }

    /// Expected photons per atom scattered during `[0, t]` for each `t`.
    pub fn cumulative_photons(&self, cache: &PropagatorCache, times: &[f64]) -> Vec<f64> {
        let d = self.dense;
        let sparse = |t: f64| {
            let mut acc = 0.0;
            for (&s, &w) in self.shifts[d..].iter().zip(&self.weights[d..]) {
                acc += w * cache.photons_until(s + t);
            }
            acc
        };
        let base = sparse(0.0);
        if d == 0 {
            return times.par_iter().map(|&t| sparse(t) - base).collect();
        }
        // Dense part: s_m + t = (m + k + f) Δτ, so the photon count is a
        // lookup in the cumulative and rate grids extended past the cache end.
        let dtau = cache.dtau;
        let nb = cache.len_bins();
        let t_max = times.iter().copied().fold(0.0, f64::max);
        let k_max = (t_max / dtau + 0.5).floor() as usize + 1;
        let steady = cache.steady_rate();
        let cum: Vec<f64> =
            (0..=nb + k_max).map(|j| cache.photons_until(j as f64 * dtau)).collect();
        let rate: Vec<f64> = (0..=nb + k_max).map(|j| if j < nb { cache.rate_grid[j] } else { steady }).collect();
        let w = &self.weights[..d];
        times
            .par_iter()
            .map(|&t| {
                let u = t.max(0.0) / dtau + 0.5;
                let k = u.floor() as usize;
                let f = (u - k as f64) * dtau;
                let half = 0.5 * dtau;
                let a = self.dense_start;
                let (ck, rk) = (&cum[a + k..a + k + d], &rate[a + k..a + k + d]);
                let (c0, r0) = (&cum[a..a + d], &rate[a..a + d]);
                let mut acc = 0.0;
                for m in 0..d {
                    acc += w[m] * ((ck[m] - c0[m]) + f * rk[m] - half * r0[m]);
                }
                acc + sparse(t) - base
            })
            .collect()
    }

    /// Expected photons in each interval `[edges[i], edges[i+1]]`.
    pub fn photons_in_bins(&self, cache: &PropagatorCache, edges: &[f64]) -> Vec<f64> {
        let c = self.cumulative_photons(cache, edges);
        c.windows(2).map(|w| w[1] - w[0]).collect()
    }
}

/// Ensemble-averaged scattering rate in the cache's own bins, one point per
/// bin of the cooling trajectory (at least one).
pub fn averaged_rate(dist: &EnergyDistribution, cache: &PropagatorCache) -> Result<Vec<AveragedPoint>> {
    let sw = ShiftWeights::new(dist, cache)?;
    let d = cache.dtau;
    let n_out = cache.len_bins().max(1);
    Ok((0..n_out)
        .into_par_iter()
        .map(|n| {
            let a = n as f64 * d;
            AveragedPoint { tau: a + 0.5 * d, rate: sw.photons_between(cache, a, a + d) / d }
        })
        .collect())
}

/// Expected photons scattered per atom while it cools from its initial energy
/// down to `eps_floor`; atoms starting below the floor contribute nothing.
pub fn photon_budget(dist: &EnergyDistribution, cache: &PropagatorCache, eps_floor: f64) -> Result<f64> {
    if !(eps_floor >= 0.0) {
        return Err(invalid("photon budget floor must be >= 0"));
    }
    let sw = ShiftWeights::new(dist, cache)?;
    let t_floor = cache.time_to_reach(eps_floor);
    let n_floor = cache.photons_until(t_floor);
    let terms: Vec<f64> = sw
        .shifts
        .iter()
        .zip(&sw.weights)
        .map(|(&s, &w)| w * (n_floor - cache.photons_until(s)).max(0.0))
        .collect();
    Ok(pairwise_sum(&terms))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::thermal::build_cache;

    fn cache() -> PropagatorCache {
        build_cache(-1.0, 0.01, 1.0, 2000.0, false).unwrap()
    }

    #[test]
    fn lagged_sum_matches_direct_sum() {
        let c = cache();
        let sw = ShiftWeights::new(&EnergyDistribution::maxwell_boltzmann(60.0).unwrap(), &c).unwrap();
        let times = [0.0, 0.3, 7.77, 150.0, c.span() + 40.5];
        let fast = sw.cumulative_photons(&c, &times);
        let direct = |t: f64| -> f64 {
            sw.shifts.iter().zip(&sw.weights).map(|(&s, &w)| w * (c.photons_until(s + t) - c.photons_until(s))).sum()
        };
        for (t, f) in times.iter().zip(&fast) {
            assert!((f - direct(*t)).abs() < 1e-10 * (1.0 + f.abs()), "t={t}: {f} vs {}", direct(*t));
        }
    }

    #[test]
    fn point_mass_at_top_reproduces_trajectory() {
        let c = cache();
        let d = EnergyDistribution::point_mass(c.eps0_max).unwrap();
        let avg = averaged_rate(&d, &c).unwrap();
        for (n, p) in avg.iter().enumerate() {
            assert!((p.rate - c.rate_grid[n]).abs() < 1e-11);
        }
    }

    #[test]
    fn point_mass_on_grid_is_shifted_trajectory() {
        let c = cache();
        let d = EnergyDistribution::point_mass(c.eps_grid[40]).unwrap();
        let avg = averaged_rate(&d, &c).unwrap();
        for n in 0..100 {
            assert!((avg[n].rate - c.rate_grid[n + 40]).abs() < 1e-12);
        }
    }

    #[test]
    fn cold_distribution_is_flat() {
        let c = cache();
        let d = EnergyDistribution::maxwell_boltzmann(1e-14).unwrap();
        for p in averaged_rate(&d, &c).unwrap() {
            assert!((p.rate - 0.5).abs() < 1e-9);
        }
    }

    #[test]
    fn thermal_weights_normalise() {
        let c = cache();
        let mean = 120.0;
        let sw = ShiftWeights::new(&EnergyDistribution::maxwell_boltzmann(mean).unwrap(), &c).unwrap();
        let nb = c.len_bins();
        let grid = pairwise_sum(&sw.weights[..sw.weights.len() - 2]) + sw.weights[sw.weights.len() - 2];
        let expected = 1.0 - (-c.eps0_max / mean).exp();
        assert!((grid - expected).abs() < 1e-12);
        assert!((sw.total_weight() - 1.0).abs() < 1e-12);
        assert!(nb > 0);
    }

    #[test]
    fn average_is_convex_combination() {
        let c = cache();
        let lo = c.rate_grid.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = c.rate_grid.iter().cloned().fold(0.0, f64::max);
        for mean in [10.0, 80.0] {
            let avg = averaged_rate(&EnergyDistribution::maxwell_boltzmann(mean).unwrap(), &c).unwrap();
            assert!(avg.iter().all(|p| p.rate >= lo * (1.0 - 1e-12) && p.rate <= hi * (1.0 + 1e-12)));
            assert!((avg.last().unwrap().rate - 0.5).abs() < 1e-6);
        }
    }

    #[test]
    fn mass_above_cache_is_rejected() {
        let c = cache();
        let err = averaged_rate(&EnergyDistribution::maxwell_boltzmann(500.0).unwrap(), &c);
        assert!(matches!(err, Err(Error::CacheTooShort { .. })));
        assert!(averaged_rate(&EnergyDistribution::point_mass(3000.0).unwrap(), &c).is_err());
    }

    #[test]
    fn empirical_matches_analytic_thermal() {
        let c = cache();
        let mb = EnergyDistribution::maxwell_boltzmann(50.0).unwrap();
        let emp = mb
            .to_empirical(crate::thermal::SamplingOptions { n_samples: 200_000, seed: 9 })
            .unwrap();
        let a = averaged_rate(&mb, &c).unwrap();
        let b = averaged_rate(&emp, &c).unwrap();
        let worst = a.iter().zip(&b).map(|(x, y)| (x.rate - y.rate).abs()).fold(0.0, f64::max);
        assert!(worst < 0.01, "{worst}");
    }
}
