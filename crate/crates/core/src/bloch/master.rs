use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scaling::PhysicalParams;

/// Internal state. `coherence` is `ρ_eg` multiplied by the conjugate laser
/// phase `exp(-i k·x)` at the atom.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TwoLevelState {
    pub rho_ee: f64,
    pub coherence: Complex64,
}

impl TwoLevelState {
    pub fn ground() -> Self {
        TwoLevelState { rho_ee: 0.0, coherence: Complex64::new(0.0, 0.0) }
    }

    pub fn rho_gg(&self) -> f64 {
        1.0 - self.rho_ee
    }

    /// Positivity defect `|ρ_eg|² - ρ_gg ρ_ee` (negative or zero when valid).
    pub fn positivity_defect(&self) -> f64 {
        self.coherence.norm_sqr() - self.rho_gg() * self.rho_ee
    }

    pub(crate) fn check(&self, t: f64) -> Result<()> {
        let d = self.positivity_defect();
        if !(self.rho_ee >= -1e-9 && self.rho_ee <= 1.0 + 1e-9 && d <= 1e-9) {
            return Err(Error::Positivity {
                t,
                detail: format!("rho_ee = {:.6e}, |rho_eg|^2 - rho_gg rho_ee = {d:.3e}", self.rho_ee),
            });
        }
        Ok(())
    }
}

/// Rates of the master equation in rad/s.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlochCoefficients {
    pub gamma: f64,
    pub rabi: f64,
    /// Laser minus atomic frequency.
    pub detuning: f64,
}

impl BlochCoefficients {
    pub fn from_params(p: &PhysicalParams) -> Result<Self> {
        p.validate()?;
        Ok(BlochCoefficients { gamma: p.gamma_rad_s, rabi: p.rabi_rad_s(), detuning: p.detuning_rad_s })
    }

    /// Steady-state excited population at detuning `detuning_eff`.
    pub fn steady_rho_ee(&self, detuning_eff: f64) -> f64 {
        let s = 2.0 * self.rabi * self.rabi / (self.gamma * self.gamma);
        0.5 * s / (1.0 + s + (2.0 * detuning_eff / self.gamma).powi(2))
    }
}

/// Free evolution over `dt`: the coherence turns by `phase` (the integral of
/// the Doppler-shifted detuning) while decaying, and the excited state decays.
#[inline]
pub(crate) fn relax(s: &mut TwoLevelState, phase: f64, decay_pop: f64, decay_coh: f64) {
    let (sn, cs) = phase.sin_cos();
    s.coherence = Complex64::new(s.coherence.re * cs - s.coherence.im * sn, s.coherence.re * sn + s.coherence.im * cs)
        * decay_coh;
    s.rho_ee *= decay_pop;
}

/// Resonant Rabi rotation by `angle = Ω dt`, given as `(cos, sin)`.
#[inline]
pub(crate) fn drive(s: &mut TwoLevelState, cos_a: f64, sin_a: f64) {
    let w = 2.0 * s.rho_ee - 1.0;
    let y = 2.0 * s.coherence.im;
    let w2 = w * cos_a - y * sin_a;
    let y2 = y * cos_a + w * sin_a;
    s.rho_ee = 0.5 * (w2 + 1.0);
    s.coherence.im = 0.5 * y2;
}

/// One symmetric step of length `dt` while the laser phase at the atom
/// advances by `k_dx = k·(x(t+dt) - x(t))`, split evenly over the step.
pub fn step_master(state: &TwoLevelState, k_dx: f64, dt: f64, c: &BlochCoefficients) -> Result<TwoLevelState> {
    let mut s = *state;
    let half = 0.5 * dt;
    let phase = c.detuning * half - 0.5 * k_dx;
    let dp = (-c.gamma * half).exp();
    let dc = (-0.5 * c.gamma * half).exp();
    relax(&mut s, phase, dp, dc);
    let (sa, ca) = (c.rabi * dt).sin_cos();
    drive(&mut s, ca, sa);
    relax(&mut s, phase, dp, dc);
    s.check(f64::NAN)?;
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rabi_oscillation_returns() {
        let c = BlochCoefficients { gamma: 0.0, rabi: 2.0, detuning: 0.0 };
        let period = std::f64::consts::TAU / c.rabi;
        let n = 1000;
        let mut s = TwoLevelState::ground();
        let mut peak: f64 = 0.0;
        for _ in 0..n {
            s = step_master(&s, 0.0, period / n as f64, &c).unwrap();
            peak = peak.max(s.rho_ee);
        }
        assert!(s.rho_ee.abs() < 1e-6, "{}", s.rho_ee);
        assert!((peak - 1.0).abs() < 1e-4);
    }

    #[test]
    fn steady_state_at_rest() {
        let c = BlochCoefficients { gamma: 1.0, rabi: 0.6, detuning: -0.8 };
        let mut s = TwoLevelState::ground();
        for _ in 0..400_000 {
            s = step_master(&s, 0.0, 1e-3, &c).unwrap();
        }
        assert!((s.rho_ee - c.steady_rho_ee(c.detuning)).abs() < 1e-6, "{} vs {}", s.rho_ee, c.steady_rho_ee(c.detuning));
    }

    #[test]
    fn uniform_velocity_shifts_detuning() {
        let c = BlochCoefficients { gamma: 1.0, rabi: 0.3, detuning: -1.0 };
        let (k, v, dt) = (1.0, 0.7, 1e-3);
        let mut s = TwoLevelState::ground();
        for _ in 0..400_000 {
            s = step_master(&s, k * v * dt, dt, &c).unwrap();
        }
        let expect = c.steady_rho_ee(c.detuning - k * v);
        assert!((s.rho_ee - expect).abs() < 1e-6, "{} vs {expect}", s.rho_ee);
    }

    #[test]
    fn positivity_is_preserved() {
        let c = BlochCoefficients { gamma: 0.3, rabi: 5.0, detuning: 2.0 };
        let mut s = TwoLevelState::ground();
        for i in 0..10_000 {
            s = step_master(&s, 0.01 * (i as f64).sin(), 0.05, &c).unwrap();
            assert!(s.positivity_defect() <= 1e-12);
        }
    }
}
