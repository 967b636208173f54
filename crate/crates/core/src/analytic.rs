//! Motion-averaged cooling and scattering rates of a single harmonic mode in
//! the weak-binding regime, and integration of the resulting energy
//! trajectory.
//!
//! All rates are in scaled units: `dε/dτ` and `dN/dτ`. They depend on the
//! energy only through `x = ε r`, which the `*_reduced` functions take
//! directly.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::ode::{Stepper, System, Tolerances};

/// Below this maximal Doppler shift the rates are evaluated from the
/// small-`b` expansion of `Z` instead of the closed form.
const SERIES_THRESHOLD: f64 = 0.1;

/// Critical detuning below which the scattering rate has an interior maximum.
pub const CRITICAL_DETUNING: f64 = -0.577_350_269_189_625_8;

/// Mode energy together with its recoil parameter.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeEnergy {
    pub eps: f64,
    pub r: f64,
}

impl ModeEnergy {
    /// Maximal scaled Doppler shift, `2 sqrt(ε r)`.
    pub fn dmax(&self) -> f64 {
        2.0 * (self.eps * self.r).sqrt()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatePair {
    pub de_dtau: f64,
    pub dn_dtau: f64,
}

/// Principal square root, branch cut along the negative real axis.
pub fn principal_sqrt(z: Complex64) -> Complex64 {
    let m = z.norm();
    if m == 0.0 {
        return Complex64::new(0.0, 0.0);
    }
    if z.re >= 0.0 {
        let s = ((m + z.re) / 2.0).sqrt();
        Complex64::new(s, z.im / (2.0 * s))
    } else {
        let t = ((m - z.re) / 2.0).sqrt();
        let sign = if z.im < 0.0 { -1.0 } else { 1.0 };
        Complex64::new(z.im.abs() / (2.0 * t), sign * t)
    }
}

/// `Z(a, b) = i b / sqrt(b² - (a + i)²)`, the φ-average of
/// `1 / (sin φ - z)` with `z = (a + i) / b`.
pub fn z_function(a: f64, b: f64) -> Result<Complex64> {
    if !(b > 0.0) {
        return Err(invalid(format!("Z requires b > 0, got {b}")));
    }
    Ok(z_closed(a, b))
}

fn z_closed(a: f64, b: f64) -> Complex64 {
    let w = Complex64::new(a, 1.0);
    let disc = Complex64::new(b * b, 0.0) - w * w;
    Complex64::new(0.0, b) / principal_sqrt(disc)
}

/// Motion averages at detuning `a` and maximal Doppler shift `b ≥ 0`:
/// `(<-δ_D L>, <L>)` with `L = 1/(1 + (a + δ_D)²)` and `δ_D = b sin φ`.
pub(crate) fn motion_averaged(a: f64, b: f64) -> (f64, f64) {
    if b == 0.0 {
        return (0.0, 1.0 / (1.0 + a * a));
    }
    if b < SERIES_THRESHOLD {
        // Z/b = -(1/w) Σ c_k (b²/w²)^k with c_k the binomial series of
        // (1 - u)^(-1/2); the k = 0 term does not contribute to cooling.
        let w = Complex64::new(a, 1.0);
        let inv_w = w.inv();
        let u = b * b * inv_w * inv_w;
        let mut term = -inv_w;
        let mut scatter = term.im;
        let mut cool = 0.0;
        let mut c = 1.0;
        for k in 0..30 {
            c *= (2 * k + 1) as f64 / (2 * k + 2) as f64;
            term *= u;
            let t = c * term;
            scatter += t.im;
            cool += t.re + a * t.im;
            if t.norm() < 1e-18 * scatter.abs() {
                break;
            }
        }
        return (cool, scatter);
    }
    let z = z_closed(a, b);
    ((z.re + a * z.im) / b, z.im / b)
}

/// Cooling and scattering rates as functions of `x = ε r`.
pub fn rates_reduced(x: f64, delta: f64) -> RatePair {
    let b = 2.0 * x.max(0.0).sqrt();
    let (de_dtau, dn_dtau) = motion_averaged(delta, b);
    RatePair { de_dtau, dn_dtau }
}

/// Probability density of the instantaneous Doppler shift of a harmonic
/// oscillation with amplitude `dmax`. Returns `+∞` at the turning points.
pub fn doppler_pdf(dmax: f64, dd: f64) -> Result<f64> {
    if !(dmax > 0.0) {
        return Err(invalid(format!("dmax must be positive, got {dmax}")));
    }
    let d = dd.abs();
    Ok(if d < dmax {
        1.0 / (std::f64::consts::PI * (dmax * dmax - dd * dd).sqrt())
    } else if d == dmax {
        f64::INFINITY
    } else {
        0.0
    })
}

/// `dε/dτ`. Negative energies are treated as zero.
pub fn cooling_rate(eps: f64, delta: f64, r: f64) -> f64 {
    rates_reduced(eps * r, delta).de_dtau
}

/// `dN/dτ`, equal to `1/(1+δ²)` for an atom at rest.
pub fn scattering_rate(eps: f64, delta: f64, r: f64) -> f64 {
    rates_reduced(eps * r, delta).dn_dtau
}

pub fn rates(eps: f64, delta: f64, r: f64) -> RatePair {
    rates_reduced(eps * r, delta)
}

/// First-order (Lamb-Dicke) cooling rate `4 δ ε r / (1+δ²)²`.
pub fn lamb_dicke_rate(eps: f64, delta: f64, r: f64) -> f64 {
    4.0 * delta * eps * r / (1.0 + delta * delta).powi(2)
}

/// Recoil heating `(4/3) r dN/dτ` for isotropic emission.
pub fn recoil_rate(dn_dtau: f64, r: f64) -> f64 {
    4.0 / 3.0 * r * dn_dtau
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriticalEnergies {
    /// Energy of fastest cooling.
    pub eps_c: f64,
    /// Energy of maximal scattering, present only below the critical detuning.
    pub eps_s: Option<f64>,
}

pub fn critical_energies(delta: f64, r: f64) -> Result<CriticalEnergies> {
    if !(delta < 0.0) || !(r > 0.0) {
        return Err(invalid("critical energies need delta < 0 and r > 0"));
    }
    let d2 = delta * delta;
    let eps_c = (1.0 + d2) / (2.0 * r) * (((1.0 - d2) / (1.0 + d2)).acos() / 3.0).cos();
    let eps_s = if delta < CRITICAL_DETUNING {
        Some((delta - 3f64.sqrt()) * (delta + 1.0 / 3f64.sqrt()) / (4.0 * r))
    } else {
        None
    };
    Ok(CriticalEnergies { eps_c, eps_s })
}

/// Ratio of the maximal to the steady-state scattering rate.
pub fn peak_scattering_ratio(delta: f64) -> Result<f64> {
    if !(delta < CRITICAL_DETUNING) {
        return Err(invalid(format!(
            "no scattering maximum for delta = {delta} >= {CRITICAL_DETUNING}"
        )));
    }
    Ok((3.0 * 3f64.sqrt()).sqrt() / 4.0 * (1.0 + delta * delta) / delta.abs().sqrt())
}

/// ODE for the reduced energy `x = ε r` against `q = τ r`, optionally
/// carrying the reduced photon count `N r` as a second component.
pub(crate) struct ReducedCooling {
    pub delta: f64,
    /// Recoil parameter when recoil heating is included, otherwise zero.
    pub recoil_r: f64,
}

impl System for ReducedCooling {
    fn rhs(&self, _q: f64, y: &[f64], d: &mut [f64]) {
        let p = rates_reduced(y[0], self.delta);
        d[0] = p.de_dtau + recoil_rate(p.dn_dtau, self.recoil_r);
        if d.len() > 1 {
            d[1] = p.dn_dtau;
        }
    }

    fn project(&self, y: &mut [f64]) {
        if y[0] < 0.0 {
            y[0] = 0.0;
        }
    }
}

pub(crate) fn trajectory_tolerances() -> Tolerances {
    Tolerances { rtol: 1e-9, atol: 1e-12 }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub tau: f64,
    pub eps: f64,
    pub dn_dtau: f64,
}

/// Integrates `dε/dτ` from `eps0` and reports `(τ, ε, dN/dτ)` on `tau_grid`,
/// which must start at 0 and increase strictly.
pub fn integrate_trajectory(
    eps0: f64,
    tau_grid: &[f64],
    delta: f64,
    r: f64,
    include_recoil: bool,
) -> Result<Vec<TrajectoryPoint>> {
    if !(eps0 >= 0.0) || !(r > 0.0) || !delta.is_finite() {
        return Err(invalid("trajectory needs eps0 >= 0, r > 0 and finite delta"));
    }
    if tau_grid.first() != Some(&0.0) || tau_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(invalid("tau grid must start at 0 and increase strictly"));
    }
    let sys = ReducedCooling {
        delta,
        recoil_r: if include_recoil { r } else { 0.0 },
    };
    let qs: Vec<f64> = tau_grid.iter().map(|t| t * r).collect();
    let mut st = Stepper::new(sys, 0.0, &[eps0 * r], trajectory_tolerances());
    let ys = st.solve_dense(&qs)?;
    // Without recoil the exact solution never rises; interpolation noise at
    // the absolute-tolerance floor is removed by a running minimum.
    let mut floor = f64::INFINITY;
    Ok(tau_grid
        .iter()
        .zip(ys)
        .map(|(&tau, y)| {
            let mut x = y[0].max(0.0);
            if !include_recoil {
                floor = floor.min(x);
                x = floor;
            }
            TrajectoryPoint {
                tau,
                eps: x / r,
                dn_dtau: rates_reduced(x, delta).dn_dtau,
            }
        })
        .collect())
}

/// Scaled time to cool from `eps_from` down to `eps_to` (recoil neglected),
/// from `dτ = dε / (dε/dτ)`.
pub fn cooling_time(eps_from: f64, eps_to: f64, delta: f64, r: f64) -> Result<f64> {
    if !(eps_from >= eps_to && eps_to > 0.0 && delta < 0.0 && r > 0.0) {
        return Err(invalid("cooling_time needs eps_from >= eps_to > 0, delta < 0, r > 0"));
    }
    let x_from = eps_from * r;
    let sys = move |_u: f64, _y: &[f64], d: &mut [f64]| {
        d[0] = -1.0 / rates_reduced(x_from - _u, delta).de_dtau;
    };
    let mut st = Stepper::new(sys, 0.0, &[0.0], Tolerances { rtol: 1e-11, atol: 1e-14 });
    st.advance_to((eps_from - eps_to) * r)?;
    Ok(st.y()[0] / r)
}
