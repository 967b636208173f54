use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::scaling::ScaledParams;
use crate::thermal::{EnergyDistribution, PropagatorCache, ShiftWeights};

/// Photon counts in contiguous time bins, summed over `n_cycles` repetitions
/// of heat-then-recool. Time is measured from the moment the cooling light
/// is switched on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FluorescenceTrace {
    pub bin_start_s: Vec<f64>,
    pub bin_width_s: Vec<f64>,
    pub counts: Vec<u64>,
    pub n_cycles: u64,
    /// Expected steady-state detected counts per second for one ion, if known.
    pub detection_rate_hint: Option<f64>,
    pub dark_rate_hz: f64,
    pub heat_duration_s: Option<f64>,
}

/// Sidecar metadata stored next to a trace CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceMetadata {
    pub n_cycles: u64,
    pub dark_rate_hz: f64,
    #[serde(default)]
    pub heat_duration_s: Option<f64>,
    #[serde(default)]
    pub detection_rate_hint: Option<f64>,
}

impl FluorescenceTrace {
    pub fn validate(&self) -> Result<()> {
        let n = self.counts.len();
        if n == 0 || self.bin_start_s.len() != n || self.bin_width_s.len() != n {
            return Err(invalid("trace columns must be non-empty and of equal length"));
        }
        if self.n_cycles == 0 {
            return Err(invalid("trace needs at least one cycle"));
        }
        if !(self.dark_rate_hz >= 0.0) {
            return Err(invalid("dark rate must be >= 0"));
        }
        if self.bin_width_s.iter().any(|w| !(*w > 0.0) || !w.is_finite()) {
            return Err(invalid("bin widths must be positive"));
        }
        if !(self.bin_start_s[0] >= 0.0) {
            return Err(invalid("trace must start at or after the light is switched on"));
        }
        for i in 1..n {
            let end = self.bin_start_s[i - 1] + self.bin_width_s[i - 1];
            if (self.bin_start_s[i] - end).abs() > 1e-9 * end.abs().max(self.bin_width_s[i - 1]) {
                return Err(invalid(format!("bin {i} does not start where bin {} ends", i - 1)));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn metadata(&self) -> TraceMetadata {
        TraceMetadata {
            n_cycles: self.n_cycles,
            dark_rate_hz: self.dark_rate_hz,
            heat_duration_s: self.heat_duration_s,
            detection_rate_hint: self.detection_rate_hint,
        }
    }

    /// Bin edges in scaled time, `t / t0`.
    pub fn tau_edges(&self, t0_s: f64) -> Vec<f64> {
        let mut e: Vec<f64> = self.bin_start_s.iter().map(|t| t / t0_s).collect();
        let last = self.len() - 1;
        e.push((self.bin_start_s[last] + self.bin_width_s[last]) / t0_s);
        e
    }

    /// Background counts expected in each bin.
    pub fn background(&self) -> Vec<f64> {
        self.bin_width_s.iter().map(|w| self.dark_rate_hz * w * self.n_cycles as f64).collect()
    }

    /// Uniform bins of width `width_s` starting at 0, with zero counts.
    pub fn uniform_bins(n_bins: usize, width_s: f64) -> (Vec<f64>, Vec<f64>) {
        ((0..n_bins).map(|i| i as f64 * width_s).collect(), vec![width_s; n_bins])
    }
}

/// Settings for synthetic traces.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationOptions {
    pub n_bins: usize,
    pub bin_width_s: f64,
    pub n_cycles: u64,
    /// Detected counts per scattered photon.
    pub detection_efficiency: f64,
    pub dark_rate_hz: f64,
    /// `None` rounds the expectation instead of drawing Poisson counts.
    pub seed: Option<u64>,
}

/// Expected (or Poisson-sampled) counts for an ensemble cooled from `dist`.
pub fn simulate_trace(
    dist: &EnergyDistribution,
    cache: &PropagatorCache,
    sp: &ScaledParams,
    opts: &SimulationOptions,
) -> Result<FluorescenceTrace> {
    if opts.n_bins == 0 || !(opts.bin_width_s > 0.0) || opts.n_cycles == 0 {
        return Err(invalid("simulation needs bins, a positive bin width and cycles"));
    }
    if !(opts.detection_efficiency > 0.0) || !(opts.dark_rate_hz >= 0.0) {
        return Err(invalid("simulation needs detection efficiency > 0 and dark rate >= 0"));
    }
    let t0 = sp.time_scale()?;
    let (bin_start_s, bin_width_s) = FluorescenceTrace::uniform_bins(opts.n_bins, opts.bin_width_s);
    let mut trace = FluorescenceTrace {
        bin_start_s,
        bin_width_s,
        counts: vec![0; opts.n_bins],
        n_cycles: opts.n_cycles,
        detection_rate_hint: Some(opts.detection_efficiency * cache.steady_rate() / t0),
        dark_rate_hz: opts.dark_rate_hz,
        heat_duration_s: None,
    };
    let sw = ShiftWeights::new(dist, cache)?;
    let photons = sw.photons_in_bins(cache, &trace.tau_edges(t0));
    let scale = opts.detection_efficiency * opts.n_cycles as f64;
    let mut rng = opts.seed.map(ChaCha8Rng::seed_from_u64);
    for (i, (q, b)) in photons.iter().zip(trace.background()).enumerate() {
        let mean = scale * q + b;
        trace.counts[i] = match rng.as_mut() {
            Some(rng) if mean > 0.0 => Poisson::new(mean).expect("positive mean").sample(rng) as u64,
            Some(_) => 0,
            None => mean.round() as u64,
        };
    }
    Ok(trace)
}
