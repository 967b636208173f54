use serde::{Deserialize, Serialize};

use crate::analytic::{cooling_time, lamb_dicke_rate, rates_reduced, trajectory_tolerances, ReducedCooling};
use crate::error::{invalid, Error, Result};
use crate::ode::Stepper;

/// Reduced energy `ε r` below which a recoil-free trajectory is treated as
/// fully cooled; the scattering rate is then within ~1e-10 of steady state.
const COOLED_X: f64 = 1e-11;

const MAX_BINS: usize = 50_000_000;

/// Relative rate change between neighbouring bins that triggers a
/// resolution warning.
const ROUGH_BIN_CHANGE: f64 = 0.05;

/// One cooling trajectory from `eps0_max`, sampled every `dtau`.
///
/// `eps_grid[n]` is the energy at `τ = n dtau`. For `n < len_bins()`,
/// `rate_grid[n]` is the mean scattering rate over `[n dtau, (n+1) dtau]`;
/// the last entry of `rate_grid` is the steady rate used beyond the end.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PropagatorCache {
    pub delta: f64,
    pub r: f64,
    pub dtau: f64,
    pub eps0_max: f64,
    pub include_recoil: bool,
    pub eps_grid: Vec<f64>,
    pub rate_grid: Vec<f64>,
    #[serde(skip)]
    pub warnings: Vec<String>,
    #[serde(skip)]
    cumulative: Vec<f64>,
}

/// Time for a recoil-free trajectory from `eps0_max` to settle: the cooling
/// time down to `εr = 0.01` plus the Lamb-Dicke decay to the cache end.
pub fn cooling_span(delta: f64, r: f64, eps0_max: f64) -> Result<f64> {
    if !(delta < 0.0) || !(r > 0.0) || !(eps0_max >= 0.0) {
        return Err(invalid("cooling span needs delta < 0, r > 0, eps0_max >= 0"));
    }
    let slope = -lamb_dicke_rate(1.0, delta, r);
    let knee = 0.01 / r;
    let settle = (0.01 / COOLED_X).ln() / slope;
    Ok(if eps0_max > knee {
        cooling_time(eps0_max, knee, delta, r)? + settle
    } else {
        settle
    })
}

/// Bin width resolving both the Lamb-Dicke decay and the whole cooling span
/// with at least 4096 bins.
pub fn default_dtau(delta: f64, r: f64, eps0_max: f64) -> Result<f64> {
    let span = cooling_span(delta, r, eps0_max)?;
    let slope = -lamb_dicke_rate(1.0, delta, r);
    Ok((0.05 / slope).min(span / 4096.0))
}

/// Integrates the trajectory from `eps0_max` until the rate is stationary.
///
/// Steps are clipped at bin edges, so each bin's photon count comes from the
/// ODE solution itself.
pub fn build_cache(delta: f64, r: f64, dtau: f64, eps0_max: f64, include_recoil: bool) -> Result<PropagatorCache> {
    if !(dtau > 0.0) || !dtau.is_finite() {
        return Err(invalid(format!("dtau must be positive, got {dtau}")));
    }
    if !(eps0_max >= 0.0) || !eps0_max.is_finite() {
        return Err(invalid(format!("eps0_max must be >= 0, got {eps0_max}")));
    }
    if !(delta < 0.0) || !(r > 0.0) {
        return Err(invalid("cooling cache needs delta < 0 and r > 0"));
    }
    let steady0 = 1.0 / (1.0 + delta * delta);
    if eps0_max == 0.0 {
        return PropagatorCache::from_grids(delta, r, dtau, 0.0, include_recoil, vec![0.0], vec![steady0]);
    }

    let sys = ReducedCooling { delta, recoil_r: if include_recoil { r } else { 0.0 } };
    let dq = dtau * r;
    let mut st = Stepper::new(sys, 0.0, &[eps0_max * r, 0.0], trajectory_tolerances());
    let mut xs = vec![eps0_max * r];
    let mut ys = vec![0.0];
    let mut rates = Vec::new();
    loop {
        let n = rates.len();
        if n >= MAX_BINS {
            return Err(Error::Numerical(format!("cooling cache exceeded {MAX_BINS} bins; dtau too small")));
        }
        st.advance_to((n + 1) as f64 * dq)?;
        let (x, y) = (st.y()[0], st.y()[1]);
        let x_prev = xs[n];
        if include_recoil && x >= x_prev * (1.0 - 1e-10) {
            break;
        }
        // Enforce the non-increasing energy of the recoil-free dynamics
        // against interpolation noise at the tolerance floor.
        let x = if include_recoil { x } else { x.min(x_prev) };
        rates.push((y - ys[n]) / dq);
        xs.push(x);
        ys.push(y);
        if !include_recoil && x < COOLED_X {
            break;
        }
    }
    let x_last = *xs.last().expect("non-empty");
    rates.push(if include_recoil { rates_reduced(x_last, delta).dn_dtau } else { steady0 });
    let eps = xs.into_iter().map(|x| x / r).collect();
    PropagatorCache::from_grids(delta, r, dtau, eps0_max, include_recoil, eps, rates)
}

/// Header written next to the cache CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CacheHeader {
    pub delta: f64,
    pub r: f64,
    pub dtau: f64,
    pub eps0_max: f64,
    #[serde(default)]
    pub include_recoil: bool,
}

impl PropagatorCache {
    /// Assembles a cache from stored grids (both of length `len_bins() + 1`).
    pub fn from_grids(
        delta: f64,
        r: f64,
        dtau: f64,
        eps0_max: f64,
        include_recoil: bool,
        eps_grid: Vec<f64>,
        rate_grid: Vec<f64>,
    ) -> Result<Self> {
        if eps_grid.is_empty() || eps_grid.len() != rate_grid.len() {
            return Err(invalid("cache grids must be non-empty and of equal length"));
        }
        if !(dtau > 0.0) || !(r > 0.0) {
            return Err(invalid("cache needs dtau > 0 and r > 0"));
        }
        if eps_grid.iter().chain(&rate_grid).any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(invalid("cache grids must be finite and non-negative"));
        }
        if eps_grid.windows(2).any(|w| w[1] >= w[0]) {
            return Err(invalid("cache energy grid must decrease strictly"));
        }
        let mut cumulative = Vec::with_capacity(rate_grid.len());
        let mut acc = 0.0;
        cumulative.push(0.0);
        for rate in &rate_grid[..rate_grid.len() - 1] {
            acc += rate * dtau;
            cumulative.push(acc);
        }
        let mut warnings = Vec::new();
        let bins = &rate_grid[..rate_grid.len() - 1];
        if let Some((n, change)) = bins
            .windows(2)
            .enumerate()
            .map(|(n, w)| (n, (w[1] - w[0]).abs() / w[0].max(w[1])))
            .max_by(|a, b| a.1.total_cmp(&b.1))
        {
            if change > ROUGH_BIN_CHANGE {
                warnings.push(format!(
                    "scattering rate changes by {:.1}% between bins {n} and {} (eps {:.4e}); reduce dtau",
                    100.0 * change,
                    n + 1,
                    eps_grid[n + 1]
                ));
            }
        }
        Ok(PropagatorCache { delta, r, dtau, eps0_max, include_recoil, eps_grid, rate_grid, warnings, cumulative })
    }

    pub fn header(&self) -> CacheHeader {
        CacheHeader {
            delta: self.delta,
            r: self.r,
            dtau: self.dtau,
            eps0_max: self.eps0_max,
            include_recoil: self.include_recoil,
        }
    }

    /// Number of integrated bins.
    pub fn len_bins(&self) -> usize {
        self.rate_grid.len() - 1
    }

    pub fn steady_rate(&self) -> f64 {
        *self.rate_grid.last().expect("non-empty")
    }

    /// Duration covered by integrated bins.
    pub fn span(&self) -> f64 {
        self.len_bins() as f64 * self.dtau
    }

    /// Photons scattered along the trajectory during `[0, tau]`, continuing
    /// at the steady rate past the end of the cache.
    pub fn photons_until(&self, tau: f64) -> f64 {
        if tau <= 0.0 {
            return 0.0;
        }
        let nb = self.len_bins();
        let u = tau / self.dtau;
        if u >= nb as f64 {
            return self.cumulative[nb] + self.steady_rate() * (tau - self.span());
        }
        let n = u as usize;
        self.cumulative[n] + self.rate_grid[n] * (tau - n as f64 * self.dtau)
    }

    /// Trajectory energy at `tau`, interpolated linearly between grid points.
    pub fn energy_at(&self, tau: f64) -> f64 {
        let nb = self.len_bins();
        let u = (tau / self.dtau).max(0.0);
        if u >= nb as f64 {
            return self.eps_grid[nb];
        }
        let n = u as usize;
        let th = u - n as f64;
        self.eps_grid[n] * (1.0 - th) + self.eps_grid[n + 1] * th
    }

    /// Time at which the trajectory passes `eps`, as a bin index plus a
    /// fraction; `None` when `eps` lies above the cache.
    pub(crate) fn locate(&self, eps: f64) -> Option<(usize, f64)> {
        let g = &self.eps_grid;
        if eps > g[0] * (1.0 + 1e-12) {
            return None;
        }
        let nb = self.len_bins();
        if eps <= g[nb] {
            return Some((nb, 0.0));
        }
        // First index whose energy is below eps; eps lies in (g[m+1], g[m]].
        let m = g.partition_point(|e| *e >= eps).max(1) - 1;
        let th = ((g[m] - eps) / (g[m] - g[m + 1])).clamp(0.0, 1.0);
        Some((m, th))
    }

    /// Time at which the trajectory passes `eps` (0 above the cache top,
    /// `span()` below its end).
    pub fn time_to_reach(&self, eps: f64) -> f64 {
        match self.locate(eps) {
            None => 0.0,
            Some((m, th)) => (m as f64 + th) * self.dtau,
        }
    }
}
