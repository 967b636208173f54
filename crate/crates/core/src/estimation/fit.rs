use serde::{Deserialize, Serialize};

use super::trace::FluorescenceTrace;
use crate::error::{invalid, Error, Result};
use crate::quadrature::pairwise_sum;
use crate::scaling::{energy_to_kelvin, ScaledParams};
use crate::thermal::{EnergyDistribution, PropagatorCache, ShiftWeights};

/// Thermal means above `eps0_max / MEAN_HEADROOM` would put more than 1e-6
/// of the distribution above the cache.
const MEAN_HEADROOM: f64 = 14.0;

/// `2 ΔNLL` for a one-sided 95% upper bound.
const UPPER_BOUND_LEVEL: f64 = 2.71;

const GOLDEN: f64 = 0.618_033_988_749_894_9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Fraction of final bins used to calibrate the steady-state amplitude.
    pub tail_fraction: f64,
    /// Search range for the thermal mean (scaled); defaults to the range the
    /// cache supports.
    pub mean_range: Option<(f64, f64)>,
    pub scan_points: usize,
    /// Relative tolerance of the golden-section search.
    pub rel_tol: f64,
    /// Relative step of the finite-difference model derivative.
    pub fd_step: f64,
    /// Minimum `2 ΔNLL` against a cold ensemble to report an estimate.
    pub detection_threshold: f64,
    /// Largest allowed tail-stationarity z-score.
    pub max_tail_z: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            tail_fraction: 0.2,
            mean_range: None,
            scan_points: 24,
            rel_tol: 1e-4,
            fd_step: 1e-3,
            detection_threshold: 4.0,
            max_tail_z: 5.0,
        }
    }
}

/// Amplitude and background of the count model `n_i = A Q_i + B w_i`, with
/// `Q_i` the expected photons per atom in bin `i`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    /// Detected counts per scattered photon, summed over cycles.
    #[serde(rename = "A")]
    pub a: f64,
    #[serde(rename = "A_sigma")]
    pub a_sigma: f64,
    /// Background counts per second of bin width, summed over cycles.
    #[serde(rename = "B")]
    pub b: f64,
    /// Steady-state signal counts per second per cycle.
    pub steady_counts_per_s: f64,
    /// z-score between the two halves of the calibration tail.
    pub tail_z: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    #[serde(rename = "mean_energy_scaled")]
    pub mean_energy: f64,
    pub mean_energy_r_units: f64,
    #[serde(rename = "temperature_K")]
    pub temperature_k: f64,
    /// Total 1-σ: Fisher term plus the propagated amplitude uncertainty.
    pub sigma: f64,
    #[serde(rename = "sigma_K")]
    pub sigma_k: f64,
    /// Fisher-information term alone (amplitude treated as exact).
    pub sigma_fisher: f64,
    #[serde(flatten)]
    pub calibration: Calibration,
    /// Poisson deviance / 2 at the optimum.
    pub nll: f64,
    /// Pearson residuals `(n_i - m_i)/sqrt(m_i)`.
    pub residuals: Vec<f64>,
    pub unimodal_scan: bool,
    pub evaluations: usize,
    pub warnings: Vec<String>,
}

/// Returned when the trace cannot be told apart from a cold ensemble.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensitivityLimit {
    pub upper_bound: f64,
    pub upper_bound_r_units: f64,
    #[serde(rename = "upper_bound_K")]
    pub upper_bound_k: f64,
    #[serde(flatten)]
    pub calibration: Calibration,
    pub nll: f64,
    /// `2 (NLL_cold - NLL_best)`.
    pub detection_statistic: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum FitOutcome {
    Estimate(FitResult),
    BelowSensitivity(SensitivityLimit),
}

struct Problem<'a> {
    cache: &'a PropagatorCache,
    edges: Vec<f64>,
    counts: Vec<f64>,
    background: Vec<f64>,
    a: f64,
    evaluations: std::cell::Cell<usize>,
}

impl Problem<'_> {
    fn model(&self, mean: f64) -> Result<Vec<f64>> {
        self.evaluations.set(self.evaluations.get() + 1);
        let dist = EnergyDistribution::maxwell_boltzmann(mean)?;
        let q = ShiftWeights::new(&dist, self.cache)?.photons_in_bins(self.cache, &self.edges);
        Ok(q.iter().zip(&self.background).map(|(q, b)| self.a * q.max(0.0) + b).collect())
    }

    fn nll_of(&self, m: &[f64]) -> f64 {
        let terms: Vec<f64> = self
            .counts
            .iter()
            .zip(m)
            .map(|(&n, &m)| {
                let m = m.max(1e-300);
                if n > 0.0 {
                    m - n + n * (n / m).ln()
                } else {
                    m
                }
            })
            .collect();
        pairwise_sum(&terms)
    }

    fn nll(&self, log_mean: f64) -> Result<f64> {
        Ok(self.nll_of(&self.model(log_mean.exp())?))
    }
}

fn calibrate(trace: &FluorescenceTrace, cache: &PropagatorCache, t0: f64, opts: &FitOptions) -> Result<Calibration> {
    let n = trace.len();
    let k = ((opts.tail_fraction * n as f64).ceil() as usize).clamp(2, n);
    let tail = n - k;
    let bg = trace.background();
    let steady = cache.steady_rate();
    let signal = |range: std::ops::Range<usize>| {
        let net: f64 = range.clone().map(|i| trace.counts[i] as f64 - bg[i]).sum();
        let var: f64 = range.clone().map(|i| trace.counts[i] as f64).sum();
        let expo: f64 = range.map(|i| steady * trace.bin_width_s[i] / t0).sum();
        (net / expo, var.sqrt() / expo)
    };
    let (a, a_sigma) = signal(tail..n);
    if !(a > 0.0) || !(a > 3.0 * a_sigma) {
        return Err(Error::Calibration(format!(
            "no steady-state fluorescence above background in the final {k} bins"
        )));
    }
    let mid = tail + k / 2;
    let (a1, s1) = signal(tail..mid);
    let (a2, s2) = signal(mid..n);
    let tail_z = (a1 - a2).abs() / (s1 * s1 + s2 * s2).sqrt().max(f64::MIN_POSITIVE);
    if tail_z > opts.max_tail_z {
        return Err(Error::Calibration(format!(
            "fluorescence tail is not stationary (z = {tail_z:.1}); extend the trace"
        )));
    }
    Ok(Calibration {
        a,
        a_sigma,
        b: trace.dark_rate_hz * trace.n_cycles as f64,
        steady_counts_per_s: a * steady / (t0 * trace.n_cycles as f64),
        tail_z,
    })
}

/// Minimises `f` over `[lo, hi]` by golden section.
fn golden_section(mut lo: f64, mut hi: f64, tol: f64, f: &dyn Fn(f64) -> Result<f64>) -> Result<(f64, f64)> {
    let mut x1 = hi - GOLDEN * (hi - lo);
    let mut x2 = lo + GOLDEN * (hi - lo);
    let mut f1 = f(x1)?;
    let mut f2 = f(x2)?;
    while hi - lo > tol {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - GOLDEN * (hi - lo);
            f1 = f(x1)?;
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + GOLDEN * (hi - lo);
            f2 = f(x2)?;
        }
    }
    Ok(if f1 <= f2 { (x1, f1) } else { (x2, f2) })
}

fn count_local_minima(v: &[f64]) -> usize {
    let scale = v.iter().fold(0.0f64, |a, b| a.max(b.abs())).max(1.0);
    let flat = 1e-9 * scale;
    let mut minima = 0;
    let mut descending = true;
    for w in v.windows(2) {
        let d = w[1] - w[0];
        if d > flat && descending {
            minima += 1;
            descending = false;
        } else if d < -flat {
            descending = true;
        }
    }
    minima + usize::from(descending)
}

/// Maximum-likelihood thermal mean energy for a re-cooling trace, with the
/// amplitude calibrated from the steady-state tail and the background fixed
/// by the dark rate.
pub fn fit_mean_energy(
    trace: &FluorescenceTrace,
    sp: &ScaledParams,
    cache: &PropagatorCache,
    opts: &FitOptions,
) -> Result<FitOutcome> {
    trace.validate()?;
    if trace.len() < 10 {
        return Err(invalid("a fit needs at least 10 bins"));
    }
    if (cache.r - sp.r()).abs() > 1e-9 * sp.r() || (cache.delta - sp.delta).abs() > 1e-9 * sp.delta.abs() {
        return Err(invalid("cache was built for different detuning or recoil parameters"));
    }
    let t0 = sp.time_scale()?;
    let calibration = calibrate(trace, cache, t0, opts)?;
    let mut warnings = Vec::new();
    if let Some(hint) = trace.detection_rate_hint {
        let rel = (calibration.steady_counts_per_s - hint).abs() / hint;
        if rel > 0.05 {
            warnings.push(format!(
                "tail-calibrated steady rate {:.4e}/s differs from the hint {hint:.4e}/s by {:.1}%",
                calibration.steady_counts_per_s,
                100.0 * rel
            ));
        }
    }
    let problem = Problem {
        cache,
        edges: trace.tau_edges(t0),
        counts: trace.counts.iter().map(|&c| c as f64).collect(),
        background: trace.background(),
        a: calibration.a,
        evaluations: std::cell::Cell::new(0),
    };

    let top = cache.eps0_max / MEAN_HEADROOM;
    let (lo, hi) = opts.mean_range.unwrap_or((top * 1e-5, top));
    if !(lo > 0.0 && hi > lo) {
        return Err(invalid("mean search range must satisfy 0 < lo < hi"));
    }
    if hi > top * (1.0 + 1e-9) {
        return Err(invalid(format!("search range exceeds the cache; means up to {top:.4e} are supported")));
    }
    let (ulo, uhi) = (lo.ln(), hi.ln());
    let np = opts.scan_points.max(5);
    let grid: Vec<f64> = (0..np).map(|i| ulo + (uhi - ulo) * i as f64 / (np - 1) as f64).collect();
    let scan = grid.iter().map(|&u| problem.nll(u)).collect::<Result<Vec<_>>>()?;
    let k = scan
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .expect("non-empty scan");
    if k == np - 1 {
        warnings.push("estimate at the upper edge of the search range; build a taller cache".into());
    }
    // Unimodality is only claimed within a factor 30 of the optimum.
    let window: Vec<f64> = grid
        .iter()
        .zip(&scan)
        .filter(|(u, _)| (*u - grid[k]).abs() <= 30f64.ln())
        .map(|(_, v)| *v)
        .collect();
    let unimodal_scan = count_local_minima(&window) == 1;
    if !unimodal_scan {
        warnings.push("likelihood has more than one local minimum within a factor 30 of the optimum".into());
    }
    let (ba, bb) = (grid[k.saturating_sub(1)], grid[(k + 1).min(np - 1)]);
    let f = |u: f64| problem.nll(u);
    let (mut u, mut best) = golden_section(ba, bb, opts.rel_tol, &f)?;

    // One Newton step on the log-mean, kept only if it improves the fit.
    let h = 1e-3;
    let (fp, fm) = (f((u + h).min(uhi))?, f((u - h).max(ulo))?);
    let curv = (fp - 2.0 * best + fm) / (h * h);
    if curv > 0.0 {
        let un = (u - (fp - fm) / (2.0 * h * curv)).clamp(ba, bb);
        let fnew = f(un)?;
        if fnew < best {
            u = un;
            best = fnew;
        }
    }

    let cold = scan[0].min(problem.nll(ulo)?);
    let detection_statistic = 2.0 * (cold - best);
    if detection_statistic < opts.detection_threshold {
        // One-sided bound: where the deviance rises by the 95% level.
        let target = best + 0.5 * UPPER_BOUND_LEVEL;
        let (mut a, mut b) = (u, uhi);
        let upper = if f(uhi)? < target {
            hi
        } else {
            for _ in 0..60 {
                let m = 0.5 * (a + b);
                if f(m)? < target {
                    a = m;
                } else {
                    b = m;
                }
                if b - a < opts.rel_tol {
                    break;
                }
            }
            (0.5 * (a + b)).exp()
        };
        return Ok(FitOutcome::BelowSensitivity(SensitivityLimit {
            upper_bound: upper,
            upper_bound_r_units: upper * sp.r(),
            upper_bound_k: energy_to_kelvin(upper, sp),
            calibration,
            nll: best,
            detection_statistic,
        }));
    }

    let mean = u.exp();
    let m = problem.model(mean)?;
    let step = opts.fd_step * mean;
    let mp = problem.model(mean + step)?;
    let mm = problem.model(mean - step)?;
    // Cross information with A gives the shift of the estimate per unit A.
    let (mut info, mut cross) = (Vec::with_capacity(m.len()), Vec::with_capacity(m.len()));
    for i in 0..m.len() {
        let d = (mp[i] - mm[i]) / (2.0 * step);
        let q = (m[i] - problem.background[i]) / calibration.a;
        let w = m[i].max(1e-300);
        info.push(d * d / w);
        cross.push(d * q / w);
    }
    let fisher = pairwise_sum(&info);
    if !(fisher > 0.0) || !fisher.is_finite() {
        return Err(Error::Numerical("Fisher information vanished at the estimate".into()));
    }
    let sigma_fisher = fisher.sqrt().recip();
    let de_da = -pairwise_sum(&cross) / fisher;
    let sigma = sigma_fisher.hypot(de_da * calibration.a_sigma);
    let residuals = problem.counts.iter().zip(&m).map(|(n, m)| (n - m) / m.sqrt()).collect();
    Ok(FitOutcome::Estimate(FitResult {
        mean_energy: mean,
        mean_energy_r_units: mean * sp.r(),
        temperature_k: energy_to_kelvin(mean, sp),
        sigma,
        sigma_k: energy_to_kelvin(sigma, sp),
        sigma_fisher,
        calibration,
        nll: best,
        residuals,
        unimodal_scan,
        evaluations: problem.evaluations.get(),
        warnings,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimation::{simulate_trace, SimulationOptions};
    use crate::scaling::{scale_parameters_scaled_only, PhysicalParams};
    use crate::thermal::build_cache;

    fn setup() -> (ScaledParams, PropagatorCache) {
        let mut sp = scale_parameters_scaled_only(&PhysicalParams::mg25()).unwrap();
        sp.delta = -1.0;
        sp.recoil = [0.01; 3];
        sp.t0_s = 1e-8;
        let cache = build_cache(sp.delta, 0.01, 20.0, 14.0 * 2000.0, false).unwrap();
        (sp, cache)
    }

    fn sim(sp: &ScaledParams, cache: &PropagatorCache, mean: f64, cycles: u64, seed: Option<u64>) -> FluorescenceTrace {
        let dist = if mean > 0.0 {
            EnergyDistribution::maxwell_boltzmann(mean).unwrap()
        } else {
            EnergyDistribution::point_mass(0.0).unwrap()
        };
        let opts = SimulationOptions {
            n_bins: 150,
            bin_width_s: 2e-6,
            n_cycles: cycles,
            detection_efficiency: 2e-3,
            dark_rate_hz: 500.0,
            seed,
        };
        simulate_trace(&dist, cache, sp, &opts).unwrap()
    }

    #[test]
    fn noiseless_trace_recovers_mean() {
        let (sp, cache) = setup();
        let tr = sim(&sp, &cache, 500.0, 200, None);
        let FitOutcome::Estimate(f) = fit_mean_energy(&tr, &sp, &cache, &FitOptions::default()).unwrap() else {
            panic!("expected an estimate")
        };
        assert!((f.mean_energy / 500.0 - 1.0).abs() < 0.2 * f.sigma / 500.0 + 2e-3, "{} ± {}", f.mean_energy, f.sigma);
        assert!(f.sigma > 0.0);
    }

    #[test]
    fn cold_trace_reports_upper_bound() {
        let (sp, cache) = setup();
        let tr = sim(&sp, &cache, 0.0, 200, None);
        match fit_mean_energy(&tr, &sp, &cache, &FitOptions::default()).unwrap() {
            FitOutcome::BelowSensitivity(l) => assert!(l.upper_bound > 0.0 && l.upper_bound < 1000.0, "{}", l.upper_bound),
            FitOutcome::Estimate(f) => panic!("unexpected estimate {}", f.mean_energy),
        }
    }

    #[test]
    fn sigma_scales_with_cycles() {
        let (sp, cache) = setup();
        let s = |c| match fit_mean_energy(&sim(&sp, &cache, 500.0, c, None), &sp, &cache, &FitOptions::default()).unwrap() {
            FitOutcome::Estimate(f) => f.sigma,
            _ => panic!(),
        };
        let ratio = s(200) / s(400);
        assert!((ratio / 2f64.sqrt() - 1.0).abs() < 0.05, "{ratio}");
    }

    #[test]
    fn unstationary_tail_is_rejected() {
        let (sp, cache) = setup();
        let mut tr = sim(&sp, &cache, 500.0, 200, None);
        let n = tr.len();
        for i in n - 15..n {
            tr.counts[i] *= 2;
        }
        assert!(matches!(fit_mean_energy(&tr, &sp, &cache, &FitOptions::default()), Err(Error::Calibration(_))));
    }

    #[test]
    fn minima_counter() {
        assert_eq!(count_local_minima(&[3.0, 2.0, 1.0, 2.0]), 1);
        assert_eq!(count_local_minima(&[3.0, 1.0, 2.0, 1.0, 3.0]), 2);
        assert_eq!(count_local_minima(&[1.0, 2.0, 3.0]), 1);
    }
}
