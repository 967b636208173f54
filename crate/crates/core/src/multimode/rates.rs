use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::bessel::sideband_weights;
use super::profile::{signed_modulation, DEFAULT_NODES};
use crate::analytic::{motion_averaged, recoil_rate};
use crate::error::{invalid, Result};
use crate::ode::{Stepper, Tolerances};
use crate::quadrature::{pairwise_sum, periodic_nodes};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];

    pub fn index(self) -> usize {
        self as usize
    }
}

/// Energies and recoil parameters of the three modes. The transverse modes
/// `x`, `y` carry micromotion when `omega_tilde > 0`; `beta0` is a constant
/// modulation index from a static stray field.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeSet {
    pub eps: [f64; 3],
    pub r: [f64; 3],
    pub omega_tilde: f64,
    #[serde(default)]
    pub beta0: f64,
}

impl ModeSet {
    pub fn new(eps: [f64; 3], r: [f64; 3], omega_tilde: f64) -> Result<Self> {
        let m = ModeSet { eps, r, omega_tilde, beta0: 0.0 };
        m.validate()?;
        Ok(m)
    }

    /// Mode set with the given maximal Doppler shifts and unit recoil.
    pub fn from_dmax(dmax: [f64; 3], omega_tilde: f64) -> Result<Self> {
        Self::new(dmax.map(|d| d * d / 4.0), [1.0; 3], omega_tilde)
    }

    pub fn validate(&self) -> Result<()> {
        if self.eps.iter().any(|e| !(*e >= 0.0) || !e.is_finite()) {
            return Err(invalid("mode energies must be finite and >= 0"));
        }
        if self.r.iter().any(|r| !(*r > 0.0)) {
            return Err(invalid("recoil parameters must be positive"));
        }
        if !(self.omega_tilde >= 0.0) || !(self.beta0 >= 0.0) {
            return Err(invalid("omega_tilde and beta0 must be >= 0"));
        }
        Ok(())
    }

    pub fn dmax(&self) -> [f64; 3] {
        std::array::from_fn(|i| 2.0 * (self.eps[i] * self.r[i]).sqrt())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rate3dOptions {
    /// Trapezoid nodes per averaged angle.
    pub nodes: usize,
}

impl Default for Rate3dOptions {
    fn default() -> Self {
        Rate3dOptions { nodes: DEFAULT_NODES }
    }
}

/// What is averaged over the three secular phases.
#[derive(Clone, Copy)]
enum Quantity {
    Cooling(usize),
    Scattering,
}

struct Micromotion {
    omega: f64,
    beta0: f64,
}

/// Phase average of `-δ_target R` (or of `R`) over the three modes.
///
/// One angle is averaged in closed form: the target (or, for scattering,
/// any) mode when its phase does not enter the line profile, otherwise the
/// axial mode. The other two use the periodic trapezoid rule; angles of
/// cold modes collapse to a single node.
fn phase_average(d: [f64; 3], delta: f64, q: Quantity, mm: Option<Micromotion>, nodes: usize) -> f64 {
    let closed = match (q, &mm) {
        (Quantity::Cooling(t), None) => t,
        (Quantity::Cooling(2), Some(_)) => 2,
        (Quantity::Cooling(_), Some(_)) | (Quantity::Scattering, Some(_)) => 2,
        (Quantity::Scattering, None) => (0..3).max_by(|&a, &b| d[a].total_cmp(&d[b])).unwrap_or(0),
    };
    let others: Vec<usize> = (0..3).filter(|&i| i != closed).collect();
    let (i, j) = (others[0], others[1]);
    let grid = periodic_nodes(nodes.max(4));
    let single = [0.0];
    let ai: &[f64] = if d[i] > 0.0 { &grid } else { &single };
    let aj: &[f64] = if d[j] > 0.0 { &grid } else { &single };
    let dc = d[closed];

    let point = |pi: f64, pj: f64| -> f64 {
        let mut angle = [0.0; 3];
        angle[i] = pi;
        angle[j] = pj;
        let shift = d[i] * pi.sin() + d[j] * pj.sin();
        // Prefactor for a target averaged on the grid: -δ_target.
        let pre = match q {
            Quantity::Cooling(t) if t != closed => -d[t] * angle[t].sin(),
            _ => 1.0,
        };
        let profile = |a: f64| -> f64 {
            let (c, s) = motion_averaged(a, dc);
            match q {
                Quantity::Cooling(t) if t == closed => c,
                _ => s,
            }
        };
        if pre == 0.0 {
            return 0.0;
        }
        match &mm {
            None => pre * profile(delta + shift),
            Some(m) => {
                let beta = (m.beta0 + signed_modulation(angle[0], angle[1], d[0], d[1], m.omega)).abs();
                let w = sideband_weights(beta);
                let mut acc = w[0] * profile(delta + shift);
                for (n, wn) in w.iter().enumerate().skip(1) {
                    if *wn < 1e-20 {
                        break;
                    }
                    let s = n as f64 * m.omega;
                    acc += wn * (profile(delta + shift - s) + profile(delta + shift + s));
                }
                pre * acc
            }
        }
    };
    let rows: Vec<f64> = ai
        .par_iter()
        .map(|&pi| {
            let row: Vec<f64> = aj.iter().map(|&pj| point(pi, pj)).collect();
            pairwise_sum(&row)
        })
        .collect();
    pairwise_sum(&rows) / (ai.len() * aj.len()) as f64
}

fn check(modes: &ModeSet, delta: f64) -> Result<()> {
    modes.validate()?;
    if !delta.is_finite() {
        return Err(invalid("delta must be finite"));
    }
    Ok(())
}

/// `dε_target/dτ` without micromotion (any `omega_tilde` is ignored).
pub fn cooling_rate_3d(modes: &ModeSet, target: Axis, delta: f64, opts: &Rate3dOptions) -> Result<f64> {
    check(modes, delta)?;
    Ok(phase_average(modes.dmax(), delta, Quantity::Cooling(target.index()), None, opts.nodes))
}

/// `dε_target/dτ` with the sideband line profile of the transverse
/// micromotion. Valid at low saturation. With `omega_tilde = 0` the
/// modulation vanishes and this equals [`cooling_rate_3d`].
pub fn cooling_rate_3d_micromotion(modes: &ModeSet, target: Axis, delta: f64, opts: &Rate3dOptions) -> Result<f64> {
    check(modes, delta)?;
    let mm = (modes.omega_tilde > 0.0).then_some(Micromotion { omega: modes.omega_tilde, beta0: modes.beta0 });
    Ok(phase_average(modes.dmax(), delta, Quantity::Cooling(target.index()), mm, opts.nodes))
}

/// `dN/dτ`, with micromotion when `omega_tilde > 0`.
pub fn scattering_rate_3d(modes: &ModeSet, delta: f64, opts: &Rate3dOptions) -> Result<f64> {
    check(modes, delta)?;
    let mm = (modes.omega_tilde > 0.0).then_some(Micromotion { omega: modes.omega_tilde, beta0: modes.beta0 });
    Ok(phase_average(modes.dmax(), delta, Quantity::Scattering, mm, opts.nodes))
}

/// Cooling rates of all three modes, with micromotion when `omega_tilde > 0`.
pub fn mode_rates(modes: &ModeSet, delta: f64, opts: &Rate3dOptions) -> Result<[f64; 3]> {
    let mut out = [0.0; 3];
    for a in Axis::ALL {
        out[a.index()] = cooling_rate_3d_micromotion(modes, a, delta, opts)?;
    }
    Ok(out)
}

/// Energies of `target` (between `eps_lo` and `eps_hi`) at which its rate
/// changes sign from heating to cooling with increasing energy, the other
/// modes held fixed. A log grid of `n` points is scanned and each crossing
/// refined by bisection.
pub fn find_stable_points(
    modes: &ModeSet,
    target: Axis,
    delta: f64,
    eps_lo: f64,
    eps_hi: f64,
    n: usize,
    opts: &Rate3dOptions,
) -> Result<Vec<f64>> {
    if !(eps_lo > 0.0 && eps_hi > eps_lo) || n < 2 {
        return Err(invalid("stable-point scan needs 0 < eps_lo < eps_hi and n >= 2"));
    }
    let t = target.index();
    let rate = |e: f64| {
        let mut m = *modes;
        m.eps[t] = e;
        cooling_rate_3d_micromotion(&m, target, delta, opts)
    };
    let grid: Vec<f64> = (0..n).map(|k| eps_lo * (eps_hi / eps_lo).powf(k as f64 / (n - 1) as f64)).collect();
    let vals = grid.iter().map(|&e| rate(e)).collect::<Result<Vec<_>>>()?;
    let mut out = Vec::new();
    for k in 0..n - 1 {
        if vals[k] > 0.0 && vals[k + 1] <= 0.0 {
            let (mut a, mut b) = (grid[k], grid[k + 1]);
            while b - a > 1e-7 * b {
                let m = (a * b).sqrt();
                if rate(m)? > 0.0 {
                    a = m;
                } else {
                    b = m;
                }
            }
            out.push((a * b).sqrt());
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvolveOptions {
    pub rates: Rate3dOptions,
    pub include_recoil: bool,
    pub rtol: f64,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        EvolveOptions { rates: Rate3dOptions { nodes: 64 }, include_recoil: false, rtol: 1e-6 }
    }
}

/// Integrates the coupled mode energies; returns `ε_i` at each time of
/// `tau_grid` (which must start at 0 and increase).
pub fn evolve_modes(modes: &ModeSet, delta: f64, tau_grid: &[f64], opts: &EvolveOptions) -> Result<Vec<[f64; 3]>> {
    check(modes, delta)?;
    if tau_grid.first() != Some(&0.0) || tau_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(invalid("tau grid must start at 0 and increase strictly"));
    }
    let r = modes.r;
    let template = *modes;
    let ropts = opts.rates;
    let recoil = opts.include_recoil;
    // State: reduced energies x_i = ε_i r_i.
    let sys = move |_t: f64, y: &[f64], dy: &mut [f64]| {
        let mut m = template;
        for i in 0..3 {
            m.eps[i] = y[i].max(0.0) / r[i];
        }
        let rates = mode_rates(&m, delta, &ropts).unwrap_or([f64::NAN; 3]);
        let dn = if recoil { scattering_rate_3d(&m, delta, &ropts).unwrap_or(f64::NAN) } else { 0.0 };
        for i in 0..3 {
            dy[i] = r[i] * (rates[i] + recoil_rate(dn, r[i]));
        }
    };
    struct Clamped<F>(F);
    impl<F: Fn(f64, &[f64], &mut [f64])> crate::ode::System for Clamped<F> {
        fn rhs(&self, t: f64, y: &[f64], d: &mut [f64]) {
            (self.0)(t, y, d)
        }
        fn project(&self, y: &mut [f64]) {
            for v in y.iter_mut() {
                *v = v.max(0.0);
            }
        }
    }
    let y0: Vec<f64> = (0..3).map(|i| modes.eps[i] * r[i]).collect();
    let mut st = Stepper::new(Clamped(sys), 0.0, &y0, Tolerances { rtol: opts.rtol, atol: 1e-12 });
    let ys = st.solve_dense(tau_grid)?;
    Ok(ys.into_iter().map(|y| std::array::from_fn(|i| y[i].max(0.0) / r[i])).collect())
}
