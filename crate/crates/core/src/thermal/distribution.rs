use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::quadrature::pairwise_sum;

/// Law of the motional energy at the start of a cooling period.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EnergyDistribution {
    /// `P(ε) = exp(-ε/mean)/mean`.
    MaxwellBoltzmann { mean: f64 },
    PointMass { eps0: f64 },
    /// Weighted samples; weights sum to one.
    Empirical { samples: Vec<f64>, weights: Vec<f64> },
}

/// Sample count and seed for the sampling-based constructions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplingOptions {
    pub n_samples: usize,
    pub seed: u64,
}

impl Default for SamplingOptions {
    fn default() -> Self {
        SamplingOptions { n_samples: 100_000, seed: 0x5eed }
    }
}

impl EnergyDistribution {
    pub fn maxwell_boltzmann(mean: f64) -> Result<Self> {
        if !(mean > 0.0) || !mean.is_finite() {
            return Err(invalid(format!("thermal mean must be positive, got {mean}")));
        }
        Ok(EnergyDistribution::MaxwellBoltzmann { mean })
    }

    pub fn point_mass(eps0: f64) -> Result<Self> {
        if !(eps0 >= 0.0) || !eps0.is_finite() {
            return Err(invalid(format!("point mass energy must be >= 0, got {eps0}")));
        }
        Ok(EnergyDistribution::PointMass { eps0 })
    }

    /// Equally weighted samples.
    pub fn from_samples(samples: Vec<f64>) -> Result<Self> {
        let n = samples.len();
        Self::empirical(samples, vec![1.0; n])
    }

    /// Weighted samples; the weights are normalised here.
    pub fn empirical(samples: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if samples.is_empty() || samples.len() != weights.len() {
            return Err(invalid("empirical distribution needs matching, non-empty samples and weights"));
        }
        if samples.iter().any(|e| !(*e >= 0.0) || !e.is_finite()) {
            return Err(invalid("samples must be finite and non-negative"));
        }
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(invalid("weights must be finite and non-negative"));
        }
        let total = pairwise_sum(&weights);
        if !(total > 0.0) {
            return Err(invalid("weights sum to zero"));
        }
        let weights = weights.into_iter().map(|w| w / total).collect();
        Ok(EnergyDistribution::Empirical { samples, weights })
    }

    pub fn mean(&self) -> f64 {
        match self {
            EnergyDistribution::MaxwellBoltzmann { mean } => *mean,
            EnergyDistribution::PointMass { eps0 } => *eps0,
            EnergyDistribution::Empirical { samples, weights } => {
                let prod: Vec<f64> = samples.iter().zip(weights).map(|(s, w)| s * w).collect();
                pairwise_sum(&prod)
            }
        }
    }

    /// Draws `n` energies. Empirical distributions are resampled by weight.
    pub fn sample(&self, n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        match self {
            EnergyDistribution::MaxwellBoltzmann { mean } => {
                let exp = Exp::new(1.0 / mean).expect("positive mean");
                (0..n).map(|_| exp.sample(rng)).collect()
            }
            EnergyDistribution::PointMass { eps0 } => vec![*eps0; n],
            EnergyDistribution::Empirical { samples, weights } => {
                let mut cdf = Vec::with_capacity(weights.len());
                let mut acc = 0.0;
                for w in weights {
                    acc += w;
                    cdf.push(acc);
                }
                let u = Uniform::new(0.0, acc);
                (0..n)
                    .map(|_| {
                        let x = u.sample(rng);
                        let i = cdf.partition_point(|c| *c <= x).min(samples.len() - 1);
                        samples[i]
                    })
                    .collect()
            }
        }
    }

    /// Empirical version of this law; empirical inputs are returned unchanged.
    pub fn to_empirical(&self, opts: SamplingOptions) -> Result<Self> {
        if let EnergyDistribution::Empirical { .. } = self {
            return Ok(self.clone());
        }
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        Self::from_samples(self.sample(opts.n_samples, &mut rng))
    }
}

/// Energy after a coherent displacement to `eps0` followed by thermal
/// heating with mean `mean`: `ε = (u + sqrt(eps0))² + v²` with `u, v`
/// independent zero-mean Gaussians of variance `mean/2`.
pub fn make_excited_thermal(eps0: f64, mean: f64, opts: SamplingOptions) -> Result<EnergyDistribution> {
    if !(eps0 >= 0.0) || !(mean >= 0.0) {
        return Err(invalid("excited thermal needs eps0 >= 0 and mean >= 0"));
    }
    if mean == 0.0 {
        return EnergyDistribution::point_mass(eps0);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let normal = Normal::new(0.0, (mean / 2.0).sqrt()).expect("finite variance");
    let offset = eps0.sqrt();
    let samples = (0..opts.n_samples)
        .map(|_| {
            let u = normal.sample(&mut rng) + offset;
            let v = normal.sample(&mut rng);
            u * u + v * v
        })
        .collect();
    EnergyDistribution::from_samples(samples)
}

/// Parametric amplification by amplitude gain `g`: one motional quadrature
/// is multiplied by `g`, the other divided by it, so `ε → g²u² + v²/g²`
/// where `u² + v² = ε` with a uniformly random oscillation phase.
///
/// This quadrature-squeezing model is a concrete choice for the protocol;
/// analytic inputs are sampled first.
pub fn parametric_amplify(
    dist: &EnergyDistribution,
    gain: f64,
    opts: SamplingOptions,
) -> Result<EnergyDistribution> {
    if !(gain >= 1.0) || !gain.is_finite() {
        return Err(invalid(format!("gain must be >= 1, got {gain}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let (samples, weights) = match dist {
        EnergyDistribution::Empirical { samples, weights } => (samples.clone(), weights.clone()),
        other => {
            let s = other.sample(opts.n_samples, &mut rng);
            let n = s.len();
            (s, vec![1.0; n])
        }
    };
    let phase = Uniform::new(0.0, std::f64::consts::TAU);
    let g2 = gain * gain;
    let amplified = samples
        .iter()
        .map(|&e| {
            let p: f64 = phase.sample(&mut rng);
            let (s, c) = p.sin_cos();
            e * (g2 * c * c + s * s / g2)
        })
        .collect();
    EnergyDistribution::empirical(amplified, weights)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn std_err_mean(samples: &[f64]) -> (f64, f64) {
        let n = samples.len() as f64;
        let m = samples.iter().sum::<f64>() / n;
        let v = samples.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
        (m, (v / n).sqrt())
    }

    #[test]
    fn constructors_validate() {
        assert!(EnergyDistribution::maxwell_boltzmann(0.0).is_err());
        assert!(EnergyDistribution::point_mass(-1.0).is_err());
        assert!(EnergyDistribution::from_samples(vec![]).is_err());
        assert!(EnergyDistribution::from_samples(vec![-1.0]).is_err());
        let d = EnergyDistribution::empirical(vec![1.0, 3.0], vec![1.0, 3.0]).unwrap();
        assert!((d.mean() - 2.5).abs() < 1e-15);
    }

    #[test]
    fn excited_thermal_zero_mean_is_point_mass() {
        let d = make_excited_thermal(4.0, 0.0, SamplingOptions::default()).unwrap();
        assert_eq!(d, EnergyDistribution::PointMass { eps0: 4.0 });
    }

    #[test]
    fn excited_thermal_moments() {
        let opts = SamplingOptions { n_samples: 1_000_000, seed: 11 };
        for &(eps0, mean) in &[(0.0, 2.0), (5.0, 0.25)] {
            let EnergyDistribution::Empirical { samples, .. } = make_excited_thermal(eps0, mean, opts).unwrap() else {
                panic!()
            };
            let (m, se) = std_err_mean(&samples);
            assert!((m - (eps0 + mean)).abs() < 3.0 * se, "{m} vs {} ± {se}", eps0 + mean);
        }
    }

    #[test]
    fn parametric_gain_moments() {
        let opts = SamplingOptions { n_samples: 400_000, seed: 3 };
        let mb = EnergyDistribution::maxwell_boltzmann(2.0).unwrap();
        let EnergyDistribution::Empirical { samples, .. } = parametric_amplify(&mb, 3.0, opts).unwrap() else {
            panic!()
        };
        let (m, se) = std_err_mean(&samples);
        let expect = 2.0 * (9.0 + 1.0 / 9.0) / 2.0;
        assert!((m - expect).abs() < 3.0 * se, "{m} vs {expect} ± {se}");
        assert!(parametric_amplify(&mb, 0.5, opts).is_err());
    }

    #[test]
    fn unit_gain_preserves_distribution() {
        // Two-sample Kolmogorov-Smirnov distance.
        let opts = SamplingOptions { n_samples: 100_000, seed: 5 };
        let mb = EnergyDistribution::maxwell_boltzmann(1.0).unwrap();
        let base = mb.to_empirical(opts).unwrap();
        let amp = parametric_amplify(&base, 1.0, SamplingOptions { seed: 6, ..opts }).unwrap();
        let (EnergyDistribution::Empirical { samples: mut a, .. }, EnergyDistribution::Empirical { samples: mut b, .. }) = (base, amp) else {
            panic!()
        };
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        let mut d: f64 = 0.0;
        for (i, x) in a.iter().enumerate() {
            let fb = b.partition_point(|y| y <= x) as f64 / b.len() as f64;
            d = d.max(((i + 1) as f64 / a.len() as f64 - fb).abs());
        }
        assert!(d < 0.01, "KS distance {d}");
    }

    #[test]
    fn sampling_is_seed_deterministic() {
        let mb = EnergyDistribution::maxwell_boltzmann(1.0).unwrap();
        let o = SamplingOptions { n_samples: 1000, seed: 42 };
        assert_eq!(mb.to_empirical(o).unwrap(), mb.to_empirical(o).unwrap());
    }
}
