use std::f64::consts::{SQRT_2, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::trajectory::{default_dt, simulate_trajectory, InitialCondition, MotionState, TrajectoryOptions};
use crate::error::{invalid, Result};
use crate::quadrature::pairwise_sum;
use crate::scaling::{scale_parameters_scaled_only, PhysicalParams};
use crate::thermal::EnergyDistribution;

/// How heating is shared between the axial mode and the two transverse modes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum HeatingModel {
    /// Transverse modes start at rest.
    AxialOnly,
    /// Mean energy of mode `i` is the axial mean times `(ω_i / ω_z)^-exponent`.
    PowerLaw { exponent: f64 },
}

/// Draws initial conditions for the Monte Carlo ensemble.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "sampler", rename_all = "snake_case")]
pub enum InitialSampler {
    Fixed { initial: InitialCondition },
    /// Per-mode energy distributions in units of `E0`, with uniform motional
    /// and RF phases. With `stratify_axial` the axial energies are taken at
    /// jittered equal-probability quantiles, one per trajectory.
    Thermal { modes: [EnergyDistribution; 3], stratify_axial: bool },
}

fn rescale(dist: &EnergyDistribution, factor: f64) -> Result<EnergyDistribution> {
    match dist {
        EnergyDistribution::MaxwellBoltzmann { mean } => EnergyDistribution::maxwell_boltzmann(mean * factor),
        EnergyDistribution::PointMass { eps0 } => EnergyDistribution::point_mass(eps0 * factor),
        EnergyDistribution::Empirical { samples, weights } => {
            EnergyDistribution::empirical(samples.iter().map(|s| s * factor).collect(), weights.clone())
        }
    }
}

fn quantile(dist: &EnergyDistribution, u: f64) -> f64 {
    match dist {
        EnergyDistribution::MaxwellBoltzmann { mean } => -mean * (-u).ln_1p(),
        EnergyDistribution::PointMass { eps0 } => *eps0,
        EnergyDistribution::Empirical { samples, weights } => {
            let mut order: Vec<usize> = (0..samples.len()).collect();
            order.sort_by(|&a, &b| samples[a].total_cmp(&samples[b]));
            let total: f64 = weights.iter().sum();
            let mut acc = 0.0;
            for &i in &order {
                acc += weights[i] / total;
                if acc >= u {
                    return samples[i];
                }
            }
            samples[*order.last().unwrap()]
        }
    }
}

impl InitialSampler {
    /// Thermal sampler with axial distribution `axial` and transverse modes set
    /// by `model`.
    pub fn thermal(axial: EnergyDistribution, model: HeatingModel, p: &PhysicalParams) -> Result<Self> {
        let w = p.secular_freqs_rad_s;
        let transverse = |i: usize| -> Result<EnergyDistribution> {
            match model {
                HeatingModel::AxialOnly => EnergyDistribution::point_mass(0.0),
                HeatingModel::PowerLaw { exponent } => {
                    if !(w[i] > 0.0 && w[2] > 0.0) {
                        return Err(invalid("power-law heating needs nonzero secular frequencies"));
                    }
                    rescale(&axial, (w[i] / w[2]).powf(-exponent))
                }
            }
        };
        Ok(InitialSampler::Thermal { modes: [transverse(0)?, transverse(1)?, axial], stratify_axial: true })
    }

    /// Initial condition for trajectory `index` of `n`.
    pub fn draw(&self, index: usize, n: usize, seed: u64, p: &PhysicalParams) -> Result<InitialCondition> {
        match self {
            InitialSampler::Fixed { initial } => Ok(*initial),
            InitialSampler::Thermal { modes, stratify_axial } => {
                let e0 = scale_parameters_scaled_only(p)?.e0_joule;
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(index as u64);
                let mut motion = MotionState::at_rest();
                for (i, dist) in modes.iter().enumerate() {
                    let eps = if i == 2 && *stratify_axial {
                        let u = (index as f64 + rng.gen::<f64>()) / n as f64;
                        quantile(dist, u.min(1.0 - f64::EPSILON))
                    } else {
                        dist.sample(1, &mut rng)[0]
                    };
                    let phase = TAU * rng.gen::<f64>();
                    let energy = eps * e0;
                    let w = p.secular_freqs_rad_s[i];
                    let speed = (2.0 * energy / p.mass_kg).sqrt();
                    if w > 0.0 {
                        motion.xbar[i] = speed / w * phase.cos();
                    }
                    motion.vbar[i] = -speed * phase.sin();
                }
                motion.rf_phase = TAU * rng.gen::<f64>();
                Ok(motion.into())
            }
        }
    }
}

/// Largest Doppler plus micromotion shift an initial condition can reach.
fn max_doppler(init: &InitialCondition, p: &PhysicalParams) -> f64 {
    let k = p.wavenumber();
    let energy = init.motion.secular_energy(p);
    let mut total = 0.0;
    for i in 0..3 {
        let vmax = (2.0 * energy[i] / p.mass_kg).sqrt();
        total += k * p.k_projection[i].abs() * vmax;
        if i < 2 && p.rf_freq_rad_s > 0.0 {
            total += k * p.k_projection[i].abs() * SQRT_2 * vmax;
        }
    }
    total
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleOptions {
    pub n_traj: usize,
    pub seed: u64,
    pub duration_s: f64,
    pub n_bins: usize,
    /// Step bound; `None` picks [`default_dt`] for the hottest drawn trajectory.
    pub dt_s: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleTrace {
    pub t_s: Vec<f64>,
    pub bin_width_s: f64,
    pub mean_rate_hz: Vec<f64>,
    pub stderr_hz: Vec<f64>,
    pub mean_energy_j: Vec<[f64; 3]>,
    pub n_traj: usize,
    pub seed: u64,
    pub dt_s: f64,
}

/// Mean fluorescence `Γ ρ_ee` over `n_traj` trajectories with standard errors.
/// The result does not depend on the number of worker threads.
pub fn ensemble_fluorescence(sampler: &InitialSampler, p: &PhysicalParams, opts: &EnsembleOptions) -> Result<EnsembleTrace> {
    let n = opts.n_traj;
    if n == 0 {
        return Err(invalid("ensemble needs at least one trajectory"));
    }
    let inits = (0..n).map(|j| sampler.draw(j, n, opts.seed, p)).collect::<Result<Vec<_>>>()?;
    let dt = match opts.dt_s {
        Some(dt) => dt,
        None => default_dt(p, inits.iter().map(|i| max_doppler(i, p)).fold(0.0, f64::max)),
    };
    let topts = TrajectoryOptions { duration_s: opts.duration_s, dt_s: dt, n_bins: opts.n_bins };
    let runs = inits.par_iter().map(|init| simulate_trajectory(init, p, &topts)).collect::<Result<Vec<_>>>()?;

    let nf = n as f64;
    let mut mean = Vec::with_capacity(opts.n_bins);
    let mut stderr = Vec::with_capacity(opts.n_bins);
    let mut energy = Vec::with_capacity(opts.n_bins);
    let mut column = vec![0.0; n];
    for b in 0..opts.n_bins {
        column.iter_mut().zip(&runs).for_each(|(c, r)| *c = r.rate_hz[b]);
        let m = pairwise_sum(&column) / nf;
        column.iter_mut().for_each(|c| *c = (*c - m) * (*c - m));
        let se = if n > 1 { (pairwise_sum(&column) / (nf - 1.0) / nf).sqrt() } else { 0.0 };
        mean.push(m);
        stderr.push(se);
        energy.push(std::array::from_fn(|i| {
            column.iter_mut().zip(&runs).for_each(|(c, r)| *c = r.energy_j[b][i]);
            pairwise_sum(&column) / nf
        }));
    }
    Ok(EnsembleTrace {
        t_s: runs[0].bin_start_s.clone(),
        bin_width_s: runs[0].bin_width_s,
        mean_rate_hz: mean,
        stderr_hz: stderr,
        mean_energy_j: energy,
        n_traj: n,
        seed: opts.seed,
        dt_s: runs[0].dt_s,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> PhysicalParams {
        let mut p = PhysicalParams::mg25();
        p.secular_freqs_rad_s = [TAU * 2e6, TAU * 2.3e6, TAU * 1e6];
        p
    }

    fn opts(n_traj: usize, seed: u64) -> EnsembleOptions {
        EnsembleOptions { n_traj, seed, duration_s: 1e-6, n_bins: 5, dt_s: None }
    }

    #[test]
    fn single_fixed_trajectory_matches_direct_run() {
        let p = params();
        let init: InitialCondition = MotionState { xbar: [1e-7, 0.0, 2e-7], vbar: [0.3, -0.2, 1.0], rf_phase: 0.0 }.into();
        let sampler = InitialSampler::Fixed { initial: init };
        let o = EnsembleOptions { dt_s: Some(1e-10), ..opts(1, 3) };
        let ens = ensemble_fluorescence(&sampler, &p, &o).unwrap();
        let direct = simulate_trajectory(&init, &p, &TrajectoryOptions { duration_s: 1e-6, dt_s: 1e-10, n_bins: 5 }).unwrap();
        assert_eq!(ens.mean_rate_hz, direct.rate_hz);
        assert!(ens.stderr_hz.iter().all(|s| *s == 0.0));
    }

    #[test]
    fn deterministic_for_seed() {
        let p = params();
        let axial = EnergyDistribution::maxwell_boltzmann(200.0).unwrap();
        let sampler = InitialSampler::thermal(axial, HeatingModel::PowerLaw { exponent: 1.0 }, &p).unwrap();
        let a = ensemble_fluorescence(&sampler, &p, &opts(8, 11)).unwrap();
        let b = ensemble_fluorescence(&sampler, &p, &opts(8, 11)).unwrap();
        let c = ensemble_fluorescence(&sampler, &p, &opts(8, 12)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.mean_rate_hz, c.mean_rate_hz);
    }

    #[test]
    fn stderr_shrinks_with_trajectory_count() {
        let p = params();
        let axial = EnergyDistribution::maxwell_boltzmann(300.0).unwrap();
        let sampler = InitialSampler::Thermal {
            modes: [EnergyDistribution::point_mass(0.0).unwrap(), EnergyDistribution::point_mass(0.0).unwrap(), axial],
            stratify_axial: false,
        };
        let small = ensemble_fluorescence(&sampler, &p, &EnsembleOptions { n_bins: 2, duration_s: 2e-7, ..opts(100, 5) }).unwrap();
        let large = ensemble_fluorescence(&sampler, &p, &EnsembleOptions { n_bins: 2, duration_s: 2e-7, ..opts(200, 5) }).unwrap();
        let ratio = (small.stderr_hz[0] / large.stderr_hz[0]).powi(2);
        assert!((ratio - 2.0).abs() < 0.6, "variance ratio {ratio}");
    }

    #[test]
    fn power_law_sets_transverse_means() {
        let p = params();
        let axial = EnergyDistribution::maxwell_boltzmann(100.0).unwrap();
        let s = InitialSampler::thermal(axial, HeatingModel::PowerLaw { exponent: 1.4 }, &p).unwrap();
        let InitialSampler::Thermal { modes, .. } = s else { panic!() };
        assert!((modes[0].mean() - 100.0 * 2f64.powf(-1.4)).abs() < 1e-9);
        assert!((modes[1].mean() - 100.0 * 2.3f64.powf(-1.4)).abs() < 1e-9);
    }

    #[test]
    fn stratified_axial_energies_follow_distribution() {
        let p = params();
        let e0 = scale_parameters_scaled_only(&p).unwrap().e0_joule;
        let axial = EnergyDistribution::maxwell_boltzmann(50.0).unwrap();
        let s = InitialSampler::thermal(axial, HeatingModel::AxialOnly, &p).unwrap();
        let n = 2000;
        let mean: f64 = (0..n).map(|j| s.draw(j, n, 1, &p).unwrap().motion.secular_energy(&p)[2] / e0).sum::<f64>() / n as f64;
        assert!((mean - 50.0).abs() < 0.5, "{mean}");
    }
}
