//! Doppler-shift densities and effective line profiles seen by one mode
//! when other modes are excited or micromotion is present.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use super::bessel::sideband_weights;
use crate::analytic::{doppler_pdf, motion_averaged};
use crate::error::{invalid, Result};
use crate::quadrature::{pairwise_sum, periodic_nodes};

/// Complete elliptic integral of the first kind from the complementary
/// modulus `k' = sqrt(1 - k²)`, via the arithmetic-geometric mean.
pub fn elliptic_k_complement(kc: f64) -> f64 {
    if kc <= 0.0 {
        return f64::INFINITY;
    }
    let (mut a, mut b) = (1.0f64, kc);
    for _ in 0..64 {
        if (a - b).abs() <= 1e-16 * a {
            break;
        }
        let an = 0.5 * (a + b);
        b = (a * b).sqrt();
        a = an;
    }
    PI / (2.0 * a)
}

/// Density of the sum `u` of two independent harmonic Doppler shifts with
/// amplitudes `dmax_x`, `dmax_y`. Diverges (returns `+∞`) at
/// `u = ±|dmax_x - dmax_y|`.
pub fn combined_doppler_pdf(dmax_x: f64, dmax_y: f64, u: f64) -> Result<f64> {
    if !(dmax_x >= 0.0) || !(dmax_y >= 0.0) || !(dmax_x + dmax_y > 0.0) {
        return Err(invalid("combined Doppler density needs dmax >= 0, not both zero"));
    }
    if dmax_y == 0.0 {
        return doppler_pdf(dmax_x, u);
    }
    if dmax_x == 0.0 {
        return doppler_pdf(dmax_y, u);
    }
    let (dx, dy) = (dmax_x, dmax_y);
    if u.abs() >= dx + dy {
        return Ok(0.0);
    }
    // ∫ dt / sqrt((1 - t²)(dy² - (u - dx t)²)) over the interval where the
    // quartic is positive, with roots -1, 1, (u ∓ dy)/dx.
    let mut e = [-1.0, 1.0, (u - dy) / dx, (u + dy) / dx];
    e.sort_by(f64::total_cmp);
    let [e1, e2, e3, e4] = e;
    let m = (e4 - e2) * (e3 - e1);
    let kc2 = (e4 - e3) * (e2 - e1) / m;
    if kc2 <= 0.0 {
        return Ok(f64::INFINITY);
    }
    let k = elliptic_k_complement(kc2.sqrt());
    Ok(2.0 * k / (PI * PI * dx * m.sqrt()))
}

/// Micromotion modulation index of the transverse secular motion,
/// `sqrt(2) |dmax_x cos φx - dmax_y cos φy| / Ω̃`.
pub fn modulation_index(phi_x: f64, phi_y: f64, dmax_x: f64, dmax_y: f64, omega_tilde: f64) -> Result<f64> {
    if !(omega_tilde > 0.0) {
        return Err(invalid("modulation index needs omega_tilde > 0"));
    }
    Ok(signed_modulation(phi_x, phi_y, dmax_x, dmax_y, omega_tilde).abs())
}

pub(crate) fn signed_modulation(phi_x: f64, phi_y: f64, dmax_x: f64, dmax_y: f64, omega_tilde: f64) -> f64 {
    std::f64::consts::SQRT_2 * (dmax_x * phi_x.cos() - dmax_y * phi_y.cos()) / omega_tilde
}

/// Sideband-broadened line profile `Σ J_n²(β) / (1 + (δ_eff - n Ω̃)²)`.
pub fn micromotion_profile(delta_eff: f64, beta: f64, omega_tilde: f64) -> Result<f64> {
    if !(beta >= 0.0) || !(omega_tilde > 0.0) {
        return Err(invalid("micromotion profile needs beta >= 0 and omega_tilde > 0"));
    }
    let w = sideband_weights(beta);
    let lor = |d: f64| 1.0 / (1.0 + d * d);
    let mut terms = Vec::with_capacity(2 * w.len());
    terms.push(w[0] * lor(delta_eff));
    for (n, wn) in w.iter().enumerate().skip(1) {
        let s = n as f64 * omega_tilde;
        terms.push(wn * lor(delta_eff - s));
        terms.push(wn * lor(delta_eff + s));
    }
    Ok(pairwise_sum(&terms))
}

/// Line profile of one mode with two spectator modes, the Lorentzian
/// convolved with their combined Doppler density.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LineProfile {
    pub dmax_x: f64,
    pub dmax_y: f64,
    /// Angle nodes of the spectator average.
    pub nodes: usize,
}

/// Default angle nodes per spectator dimension.
pub const DEFAULT_NODES: usize = 128;

pub fn effective_profile(dmax_x: f64, dmax_y: f64) -> Result<LineProfile> {
    if !(dmax_x >= 0.0) || !(dmax_y >= 0.0) {
        return Err(invalid("dmax values must be >= 0"));
    }
    Ok(LineProfile { dmax_x, dmax_y, nodes: DEFAULT_NODES })
}

impl LineProfile {
    pub fn is_lorentzian(&self) -> bool {
        self.dmax_x == 0.0 && self.dmax_y == 0.0
    }

    /// Profile value; one spectator angle is averaged in closed form and the
    /// other by the periodic trapezoid rule.
    pub fn value(&self, delta_eff: f64) -> f64 {
        if self.is_lorentzian() {
            return 1.0 / (1.0 + delta_eff * delta_eff);
        }
        let (a, b) = if self.dmax_x >= self.dmax_y { (self.dmax_y, self.dmax_x) } else { (self.dmax_x, self.dmax_y) };
        if a == 0.0 {
            return motion_averaged(delta_eff, b).1;
        }
        let vals: Vec<f64> = periodic_nodes(self.nodes)
            .into_iter()
            .map(|p| motion_averaged(delta_eff + a * p.sin(), b).1)
            .collect();
        pairwise_sum(&vals) / self.nodes as f64
    }

    /// `(δ_eff, value)` on `n` points spanning `[-half_width, half_width]`.
    pub fn tabulate(&self, half_width: f64, n: usize) -> Vec<(f64, f64)> {
        let n = n.max(2);
        (0..n)
            .map(|i| {
                let d = -half_width + 2.0 * half_width * i as f64 / (n - 1) as f64;
                (d, self.value(d))
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Tanh-sinh rule on `[a, b]`, tolerant of integrable endpoint
    /// singularities.
    fn tanh_sinh(a: f64, b: f64, f: impl Fn(f64) -> f64) -> f64 {
        let h = 1.0 / 64.0;
        let (c, r) = (0.5 * (a + b), 0.5 * (b - a));
        let mut acc = 0.0;
        for k in -400..=400 {
            let t = k as f64 * h;
            let s = 0.5 * PI * t.sinh();
            let x = s.tanh();
            let w = 0.5 * PI * t.cosh() / s.cosh().powi(2);
            let u = c + r * x;
            if u <= a || u >= b || w < 1e-300 {
                continue;
            }
            let v = f(u);
            // Rounding can land a node on an interior singularity.
            if v.is_finite() {
                acc += w * v;
            }
        }
        acc * h * r
    }

    /// The same density from the convolution integral with the inverse-square
    /// root endpoints removed by a sine substitution.
    fn pdf_oracle(dx: f64, dy: f64, u: f64) -> f64 {
        let lo = (-1.0f64).max((u - dy) / dx);
        let hi = 1.0f64.min((u + dy) / dx);
        if hi <= lo {
            return 0.0;
        }
        let n = 20000;
        let (c, r) = (0.5 * (lo + hi), 0.5 * (hi - lo));
        let mut acc = 0.0;
        for j in 0..n {
            let psi = -0.5 * PI + PI * (j as f64 + 0.5) / n as f64;
            let t = c + r * psi.sin();
            let q = (1.0 - t * t) * (dy * dy - (u - dx * t).powi(2));
            if q > 0.0 {
                acc += r * psi.cos() / q.sqrt();
            }
        }
        acc * (PI / n as f64) / (PI * PI)
    }

    #[test]
    fn closed_form_matches_convolution() {
        for &(dx, dy) in &[(3.0f64, 1.0f64), (2.0, 2.0), (0.5, 4.0), (1.0, 1.3)] {
            for &u in &[0.0f64, 0.3, 1.1, 2.5, -3.7, 4.2] {
                if u.abs() >= dx + dy || (u.abs() - (dx - dy).abs()).abs() < 0.05 {
                    continue;
                }
                let a = combined_doppler_pdf(dx, dy, u).unwrap();
                let b = pdf_oracle(dx, dy, u);
                assert!((a - b).abs() < 1e-6 * b.max(1e-3), "({dx},{dy}) u={u}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn reduces_to_single_mode() {
        for &u in &[0.0, 1.0, 2.9] {
            assert_eq!(combined_doppler_pdf(3.0, 0.0, u).unwrap(), doppler_pdf(3.0, u).unwrap());
        }
    }

    #[test]
    fn diverges_at_difference_and_has_unit_mass() {
        let (dx, dy) = (3.0, 1.0);
        assert!(combined_doppler_pdf(dx, dy, 2.0).unwrap().is_infinite());
        assert!(combined_doppler_pdf(dx, dy, 1.999).unwrap() > combined_doppler_pdf(dx, dy, 1.9).unwrap());
        assert!(combined_doppler_pdf(dx, dy, 2.001).unwrap() > combined_doppler_pdf(dx, dy, 2.1).unwrap());
        let f = |u: f64| combined_doppler_pdf(dx, dy, u).unwrap();
        let mass = 2.0 * (tanh_sinh(0.0, 2.0, f) + tanh_sinh(2.0, 4.0, f));
        assert!((mass - 1.0).abs() < 1e-8, "{mass}");
    }

    #[test]
    fn elliptic_known_value() {
        // K(k² = 1/2)
        let k = elliptic_k_complement(0.5f64.sqrt());
        assert!((k - 1.854_074_677_301_372).abs() < 1e-14);
    }

    #[test]
    fn modulation_index_examples() {
        assert_eq!(modulation_index(0.7, 0.7, 2.0, 2.0, 6.0).unwrap(), 0.0);
        let b = modulation_index(0.0, 1.0, 3.0, 0.0, 6.0).unwrap();
        assert!((b - 0.5f64.sqrt()).abs() < 1e-15);
        // π-shift of both phases only flips the sign inside the modulus.
        for i in 0..16 {
            for j in 0..16 {
                let (px, py) = (0.4 * i as f64, 0.4 * j as f64);
                let a = modulation_index(px, py, 2.0, 1.5, 6.0).unwrap();
                let c = modulation_index(px + PI, py + PI, 2.0, 1.5, 6.0).unwrap();
                let m = modulation_index(-px, -py, 2.0, 1.5, 6.0).unwrap();
                assert!((a - c).abs() < 1e-14 && (a - m).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn micromotion_profile_limits() {
        for &d in &[-3.0, 0.0, 1.5] {
            assert_eq!(micromotion_profile(d, 0.0, 6.0).unwrap(), 1.0 / (1.0 + d * d));
        }
        // Wide-truncation oracle.
        let (beta, om, d) = (2.0, 6.0, 6.0);
        let j = super::super::bessel::bessel_j_upto(200, beta);
        let mut brute = j[0] * j[0] / (1.0 + d * d);
        for n in 1..=200 {
            let w = j[n] * j[n];
            brute += w / (1.0 + (d - n as f64 * om).powi(2)) + w / (1.0 + (d + n as f64 * om).powi(2));
        }
        let v = micromotion_profile(d, beta, om).unwrap();
        assert!((v - brute).abs() < 1e-10);
        let j1 = j[1] * j[1];
        assert!(j1 > 0.5 * v, "first sideband dominates");
    }

    fn local_maxima(t: &[(f64, f64)]) -> Vec<f64> {
        t.windows(3).filter(|w| w[1].1 > w[0].1 && w[1].1 >= w[2].1).map(|w| w[1].0).collect()
    }

    #[test]
    fn profile_shapes() {
        let lor = effective_profile(0.0, 0.0).unwrap();
        assert_eq!(lor.value(0.7), 1.0 / 1.49);
        let p04 = effective_profile(0.0, 4.0).unwrap().tabulate(8.0, 801);
        let p22 = effective_profile(2.0, 2.0).unwrap().tabulate(8.0, 801);
        let m04 = local_maxima(&p04);
        assert_eq!(m04.len(), 2);
        // Lorentzian broadening pulls the maxima in from the density peaks at ±4.
        assert!(m04.iter().all(|m| (3.0..4.0).contains(&m.abs())), "{m04:?}");
        assert!((m04[0] + m04[1]).abs() < 1e-12);
        assert_eq!(local_maxima(&p22).len(), 1);
        // Symmetric in δ_eff and in swapping the spectators.
        let p = effective_profile(3.0, 1.0).unwrap();
        let q = effective_profile(1.0, 3.0).unwrap();
        for &d in &[0.3, 2.2, 5.0] {
            assert!((p.value(d) - p.value(-d)).abs() < 1e-12);
            assert!((p.value(d) - q.value(d)).abs() < 1e-15);
        }
    }

    #[test]
    fn profile_is_lorentzian_convolved_with_density() {
        let (dx, dy) = (3.0, 1.0);
        let prof = effective_profile(dx, dy).unwrap();
        for &d in &[-1.0, 0.5, 3.0] {
            let f = |u: f64| combined_doppler_pdf(dx, dy, u).unwrap() / (1.0 + (d + u).powi(2));
            let conv = tanh_sinh(-4.0, -2.0, f) + tanh_sinh(-2.0, 2.0, f) + tanh_sinh(2.0, 4.0, f);
            assert!((conv - prof.value(d)).abs() < 1e-8, "{d}: {conv} vs {}", prof.value(d));
        }
    }
}
