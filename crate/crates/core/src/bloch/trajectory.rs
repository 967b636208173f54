use std::f64::consts::{SQRT_2, TAU};

use serde::{Deserialize, Serialize};

use super::master::{drive, relax, BlochCoefficients, TwoLevelState};
use crate::constants::HBAR;
use crate::error::{invalid, Error, Result};
use crate::scaling::PhysicalParams;

/// Secular position and velocity per trap axis plus the RF phase at `t = 0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MotionState {
    pub xbar: [f64; 3],
    pub vbar: [f64; 3],
    pub rf_phase: f64,
}

impl MotionState {
    pub fn at_rest() -> Self {
        MotionState { xbar: [0.0; 3], vbar: [0.0; 3], rf_phase: 0.0 }
    }

    /// Secular energy per mode in joules.
    pub fn secular_energy(&self, p: &PhysicalParams) -> [f64; 3] {
        std::array::from_fn(|i| {
            let w = p.secular_freqs_rad_s[i];
            0.5 * p.mass_kg * (self.vbar[i] * self.vbar[i] + w * w * self.xbar[i] * self.xbar[i])
        })
    }
}

/// Kinematic micromotion amplitude of a linear quadrupole trap whose RF
/// field points along `x̄ x̂ - ȳ ŷ`.
pub fn micromotion_amplitude(xbar: &[f64; 3], p: &PhysicalParams) -> [f64; 3] {
    if p.rf_freq_rad_s == 0.0 {
        return [0.0; 3];
    }
    let w = &p.secular_freqs_rad_s;
    let o = p.rf_freq_rad_s;
    [SQRT_2 * w[0] / o * xbar[0], -SQRT_2 * w[1] / o * xbar[1], 0.0]
}

/// Initial condition for one trajectory. The internal state starts in the
/// ground state unless given.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InitialCondition {
    pub motion: MotionState,
    pub internal: TwoLevelState,
}

impl From<MotionState> for InitialCondition {
    fn from(motion: MotionState) -> Self {
        InitialCondition { motion, internal: TwoLevelState::ground() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryOptions {
    pub duration_s: f64,
    /// Upper bound on the step; the actual step divides the bin width.
    pub dt_s: f64,
    pub n_bins: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub bin_start_s: Vec<f64>,
    pub bin_width_s: f64,
    pub dt_s: f64,
    /// `Γ ρ_ee` averaged over each bin, photons per second.
    pub rate_hz: Vec<f64>,
    /// Secular energy per mode at the end of each bin, joules.
    pub energy_j: Vec<[f64; 3]>,
    pub final_motion: MotionState,
    pub final_internal: TwoLevelState,
}

/// Step size that resolves the RF period, the largest Doppler-shifted
/// detuning and the decay time, each with 40 steps.
pub fn default_dt(p: &PhysicalParams, max_doppler_rad_s: f64) -> f64 {
    let mut scale = 1.0 / p.gamma_rad_s;
    if p.rf_freq_rad_s > 0.0 {
        scale = scale.min(TAU / p.rf_freq_rad_s);
    }
    let det = p.detuning_rad_s.abs() + max_doppler_rad_s.abs();
    if det > 0.0 {
        scale = scale.min(TAU / det);
    }
    scale / 40.0
}

struct Mode {
    cos: f64,
    sin: f64,
    omega: f64,
    sin_over_omega: f64,
}

impl Mode {
    fn new(omega: f64, h: f64) -> Self {
        let (sin, cos) = (omega * h).sin_cos();
        let sin_over_omega = if omega == 0.0 { h } else { sin / omega };
        Mode { cos, sin, omega, sin_over_omega }
    }

    #[inline]
    fn advance(&self, x: &mut f64, v: &mut f64) {
        let (x0, v0) = (*x, *v);
        *x = x0 * self.cos + v0 * self.sin_over_omega;
        *v = v0 * self.cos - x0 * self.omega * self.sin;
    }
}

/// Integrates the optical Bloch equations together with the secular motion
/// under the mean light force `ħ k Γ ρ_ee`. Recoil heating is not included.
pub fn simulate_trajectory(init: &InitialCondition, p: &PhysicalParams, opts: &TrajectoryOptions) -> Result<Trajectory> {
    let c = BlochCoefficients::from_params(p)?;
    if !(opts.duration_s > 0.0) || !(opts.dt_s > 0.0) || opts.n_bins == 0 {
        return Err(invalid("trajectory needs positive duration, dt and at least one bin"));
    }
    let bin_width = opts.duration_s / opts.n_bins as f64;
    let steps_per_bin = (bin_width / opts.dt_s).ceil().max(1.0);
    if steps_per_bin * opts.n_bins as f64 > 1e12 {
        return Err(invalid("time step too small for the requested duration"));
    }
    let steps_per_bin = steps_per_bin as u64;
    let h = bin_width / steps_per_bin as f64;
    let half = 0.5 * h;

    let k = p.wavenumber();
    let kvec: [f64; 3] = std::array::from_fn(|i| k * p.k_projection[i]);
    let kick = HBAR * p.gamma_rad_s / p.mass_kg;
    let kick_vec: [f64; 3] = std::array::from_fn(|i| kick * kvec[i]);
    let modes: [Mode; 3] = std::array::from_fn(|i| Mode::new(p.secular_freqs_rad_s[i], half));
    let rf = p.rf_freq_rad_s;
    let mm_coef = if rf > 0.0 {
        let w = &p.secular_freqs_rad_s;
        [SQRT_2 * w[0] / rf, -SQRT_2 * w[1] / rf]
    } else {
        [0.0, 0.0]
    };

    let dp = (-c.gamma * half).exp();
    let dc = (-0.5 * c.gamma * half).exp();
    let (sa, ca) = (c.rabi * h).sin_cos();
    let det_half = c.detuning * half;

    let mut x = init.motion.xbar;
    let mut v = init.motion.vbar;
    let rf_phase = init.motion.rf_phase;
    let mut s = init.internal;
    s.check(0.0)?;

    let phase_of = |x: &[f64; 3], t: f64| -> f64 {
        let mut kx = kvec[0] * x[0] + kvec[1] * x[1] + kvec[2] * x[2];
        if rf > 0.0 {
            let c = (rf * t + rf_phase).cos();
            kx += c * (kvec[0] * mm_coef[0] * x[0] + kvec[1] * mm_coef[1] * x[1]);
        }
        kx
    };

    let mut out = Trajectory {
        bin_start_s: Vec::with_capacity(opts.n_bins),
        bin_width_s: bin_width,
        dt_s: h,
        rate_hz: Vec::with_capacity(opts.n_bins),
        energy_j: Vec::with_capacity(opts.n_bins),
        final_motion: init.motion,
        final_internal: s,
    };

    let mut kx = phase_of(&x, 0.0);
    let mut last_valid = (0.0, x, v, s);
    for b in 0..opts.n_bins {
        let t_bin = b as f64 * bin_width;
        let mut acc = 0.5 * s.rho_ee;
        for j in 0..steps_per_bin {
            let t = t_bin + j as f64 * h;
            let f = half * s.rho_ee;
            for i in 0..3 {
                v[i] += f * kick_vec[i];
                modes[i].advance(&mut x[i], &mut v[i]);
            }
            let kx_mid = phase_of(&x, t + half);
            relax(&mut s, det_half - (kx_mid - kx), dp, dc);
            drive(&mut s, ca, sa);
            for i in 0..3 {
                modes[i].advance(&mut x[i], &mut v[i]);
            }
            let kx_end = phase_of(&x, t + h);
            relax(&mut s, det_half - (kx_end - kx_mid), dp, dc);
            let f = half * s.rho_ee;
            for i in 0..3 {
                v[i] += f * kick_vec[i];
            }
            kx = kx_end;
            acc += s.rho_ee;
        }
        acc -= 0.5 * s.rho_ee;
        let t_end = t_bin + bin_width;
        let motion = MotionState { xbar: x, vbar: v, rf_phase };
        let energy = motion.secular_energy(p);
        if !energy.iter().all(|e| e.is_finite()) || !s.rho_ee.is_finite() {
            let (t0, x0, v0, s0) = last_valid;
            return Err(Error::Numerical(format!(
                "trajectory diverged before t = {t_end:.6e} s; last valid state at t = {t0:.6e} s: \
                 xbar = {x0:?}, vbar = {v0:?}, rho_ee = {:.6e}",
                s0.rho_ee
            )));
        }
        s.check(t_end)?;
        last_valid = (t_end, x, v, s);
        out.bin_start_s.push(t_bin);
        out.rate_hz.push(c.gamma * acc / steps_per_bin as f64);
        out.energy_j.push(energy);
    }
    out.final_motion = MotionState { xbar: x, vbar: v, rf_phase };
    out.final_internal = s;
    Ok(out)
}
