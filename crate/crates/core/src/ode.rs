//! Dormand–Prince 5(4) integrator with step-size control and its native
//! fourth-order continuous extension for dense output.

use crate::error::{Error, Result};

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
/// Difference between the 5th- and 4th-order weights.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Coefficients of the continuous extension (Hairer, Nørsett & Wanner).
const D: [f64; 7] = [
    -12715105075.0 / 11282082432.0,
    0.0,
    87487479700.0 / 32700410799.0,
    -10690763975.0 / 1880347072.0,
    701980252875.0 / 199316789632.0,
    -1453857185.0 / 822651844.0,
    69997945.0 / 29380423.0,
];

#[derive(Clone, Copy, Debug)]
pub struct Tolerances {
    pub rtol: f64,
    pub atol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { rtol: 1e-9, atol: 1e-12 }
    }
}

/// Right-hand side `dy/dt = f(t, y)` written into the output slice.
pub trait System {
    fn rhs(&self, t: f64, y: &[f64], dydt: &mut [f64]);

    /// Maps an accepted state back onto the admissible set (e.g. clamps
    /// energies at zero). Identity by default.
    fn project(&self, _y: &mut [f64]) {}
}

impl<F: Fn(f64, &[f64], &mut [f64])> System for F {
    fn rhs(&self, t: f64, y: &[f64], dydt: &mut [f64]) {
        self(t, y, dydt)
    }
}

/// Stateful adaptive stepper. Keeps the previous accepted step for
/// interpolation.
pub struct Stepper<S: System> {
    sys: S,
    tol: Tolerances,
    pub max_steps: usize,
    t: f64,
    y: Vec<f64>,
    f: Vec<f64>,
    t_prev: f64,
    cont: [Vec<f64>; 5],
    h: f64,
    steps: usize,
    k: [Vec<f64>; 7],
    tmp: Vec<f64>,
    err: Vec<f64>,
}

impl<S: System> Stepper<S> {
    pub fn new(sys: S, t0: f64, y0: &[f64], tol: Tolerances) -> Self {
        let n = y0.len();
        let mut f = vec![0.0; n];
        let mut y = y0.to_vec();
        sys.project(&mut y);
        sys.rhs(t0, &y, &mut f);
        Stepper {
            sys,
            tol,
            max_steps: 10_000_000,
            t: t0,
            cont: std::array::from_fn(|_| vec![0.0; n]),
            y,
            f,
            t_prev: t0,
            h: 0.0,
            steps: 0,
            k: std::array::from_fn(|_| vec![0.0; n]),
            tmp: vec![0.0; n],
            err: vec![0.0; n],
        }
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn system(&self) -> &S {
        &self.sys
    }

    fn scale(&self, a: f64, b: f64) -> f64 {
        self.tol.atol + self.tol.rtol * a.abs().max(b.abs())
    }

    fn initial_step(&mut self, direction_span: f64) -> f64 {
        let n = self.y.len() as f64;
        let mut d0 = 0.0;
        let mut d1 = 0.0;
        for i in 0..self.y.len() {
            let sc = self.scale(self.y[i], self.y[i]);
            d0 += (self.y[i] / sc).powi(2);
            d1 += (self.f[i] / sc).powi(2);
        }
        let (d0, d1) = ((d0 / n).sqrt(), (d1 / n).sqrt());
        let mut h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
        h0 = h0.min(direction_span.abs());
        // One explicit Euler step to estimate the second derivative.
        for i in 0..self.y.len() {
            self.tmp[i] = self.y[i] + h0 * self.f[i];
        }
        let mut f1 = vec![0.0; self.y.len()];
        self.sys.rhs(self.t + h0, &self.tmp, &mut f1);
        let mut d2 = 0.0;
        for i in 0..self.y.len() {
            let sc = self.scale(self.y[i], self.y[i]);
            d2 += ((f1[i] - self.f[i]) / sc).powi(2);
        }
        let d2 = (d2 / n).sqrt() / h0;
        let h1 = if d1.max(d2) <= 1e-15 {
            (h0 * 1e-3).max(1e-6)
        } else {
            (0.01 / d1.max(d2)).powf(0.2)
        };
        (100.0 * h0).min(h1).min(direction_span.abs())
    }

    /// Takes one accepted step without passing `t_limit` (> current t).
    pub fn step(&mut self, t_limit: f64) -> Result<()> {
        let span = t_limit - self.t;
        if span <= 0.0 {
            return Ok(());
        }
        if span <= 1e-14 * self.t.abs() {
            self.t = t_limit;
            return Ok(());
        }
        if self.h <= 0.0 {
            self.h = self.initial_step(span);
        }
        let n = self.y.len();
        loop {
            if self.steps >= self.max_steps {
                return Err(Error::Numerical(format!(
                    "step limit {} reached at t = {:e}",
                    self.max_steps, self.t
                )));
            }
            let mut h = self.h.min(span);
            // Never leave a remainder too small to step across.
            let last = span - h <= 1e-10 * (self.t.abs() + span);
            if last {
                h = span;
            }
            if h <= self.t.abs() * 1e-15 {
                return Err(Error::Numerical(format!("step size underflow at t = {:e}", self.t)));
            }
            self.k[0].copy_from_slice(&self.f);
            for s in 1..7 {
                for i in 0..n {
                    let mut acc = self.y[i];
                    for j in 0..s {
                        acc += h * A[s][j] * self.k[j][i];
                    }
                    self.tmp[i] = acc;
                }
                self.sys.rhs(self.t + C[s] * h, &self.tmp, &mut self.k[s]);
            }
            // tmp now holds the 5th-order solution (FSAL stage input).
            let mut norm = 0.0;
            for i in 0..n {
                let mut e = 0.0;
                for (s, ks) in self.k.iter().enumerate() {
                    e += E[s] * ks[i];
                }
                self.err[i] = h * e;
                let sc = self.scale(self.y[i], self.tmp[i]);
                norm += (self.err[i] / sc).powi(2);
            }
            let norm = (norm / n as f64).sqrt();
            self.steps += 1;
            if !norm.is_finite() {
                self.h = h * 0.1;
                continue;
            }
            let factor = if norm == 0.0 {
                5.0
            } else {
                (0.9 * norm.powf(-0.2)).clamp(0.2, 5.0)
            };
            if norm <= 1.0 {
                self.t_prev = self.t;
                for i in 0..n {
                    let y0 = self.y[i];
                    let y1 = self.tmp[i];
                    let ydiff = y1 - y0;
                    let bspl = h * self.k[0][i] - ydiff;
                    let mut d = 0.0;
                    for (s, ks) in self.k.iter().enumerate() {
                        d += D[s] * ks[i];
                    }
                    self.cont[0][i] = y0;
                    self.cont[1][i] = ydiff;
                    self.cont[2][i] = bspl;
                    self.cont[3][i] = ydiff - h * self.k[6][i] - bspl;
                    self.cont[4][i] = h * d;
                }
                self.y.copy_from_slice(&self.tmp);
                self.t = if last { t_limit } else { self.t + h };
                let before = self.y.clone();
                self.sys.project(&mut self.y);
                if before == self.y {
                    self.f.copy_from_slice(&self.k[6]);
                } else {
                    self.sys.rhs(self.t, &self.y, &mut self.f);
                }
                if !last || factor < 1.0 {
                    self.h = h * factor;
                } else {
                    self.h = self.h.max(h * factor.min(1.0));
                }
                return Ok(());
            }
            self.h = h * factor.min(1.0);
        }
    }

    /// Steps until the current time equals `t` exactly.
    pub fn advance_to(&mut self, t: f64) -> Result<()> {
        while self.t < t {
            self.step(t)?;
        }
        Ok(())
    }

    /// Continuous extension on the last accepted step. At the step end the
    /// projected state is returned.
    pub fn interpolate(&self, t: f64, out: &mut [f64]) {
        let h = self.t - self.t_prev;
        if h <= 0.0 || t >= self.t {
            out.copy_from_slice(&self.y);
            return;
        }
        let th = ((t - self.t_prev) / h).max(0.0);
        let th1 = 1.0 - th;
        let c = &self.cont;
        for i in 0..out.len() {
            out[i] = c[0][i]
                + th * (c[1][i] + th1 * (c[2][i] + th * (c[3][i] + th1 * c[4][i])));
        }
    }

    /// Integrates through the increasing output times `ts` (all ≥ current t),
    /// returning the interpolated state at each.
    pub fn solve_dense(&mut self, ts: &[f64]) -> Result<Vec<Vec<f64>>> {
        let n = self.y.len();
        let mut out = Vec::with_capacity(ts.len());
        let Some(&t_end) = ts.last() else {
            return Ok(out);
        };
        let mut idx = 0;
        while idx < ts.len() && ts[idx] <= self.t {
            out.push(self.y.clone());
            idx += 1;
        }
        while idx < ts.len() {
            self.step(t_end)?;
            while idx < ts.len() && ts[idx] <= self.t {
                let mut v = vec![0.0; n];
                self.interpolate(ts[idx], &mut v);
                out.push(v);
                idx += 1;
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay_dense_output() {
        let sys = |_t: f64, y: &[f64], d: &mut [f64]| d[0] = -y[0];
        let mut st = Stepper::new(sys, 0.0, &[1.0], Tolerances::default());
        let ts: Vec<f64> = (0..=50).map(|i| i as f64 * 0.2).collect();
        let ys = st.solve_dense(&ts).unwrap();
        for (t, y) in ts.iter().zip(&ys) {
            assert!((y[0] - (-t).exp()).abs() < 1e-9, "t={t} err={}", y[0] - (-t).exp());
        }
    }

    #[test]
    fn harmonic_oscillator_advance_exact_endpoint() {
        let sys = |_t: f64, y: &[f64], d: &mut [f64]| {
            d[0] = y[1];
            d[1] = -y[0];
        };
        let mut st = Stepper::new(sys, 0.0, &[1.0, 0.0], Tolerances { rtol: 1e-11, atol: 1e-13 });
        st.advance_to(10.0 * std::f64::consts::PI).unwrap();
        assert_eq!(st.t(), 10.0 * std::f64::consts::PI);
        assert!((st.y()[0] - 1.0).abs() < 1e-8);
        assert!(st.y()[1].abs() < 1e-8);
    }

    struct Clamped;
    impl System for Clamped {
        fn rhs(&self, _t: f64, _y: &[f64], d: &mut [f64]) {
            d[0] = -1.0;
        }
        fn project(&self, y: &mut [f64]) {
            y[0] = y[0].max(0.0);
        }
    }

    #[test]
    fn projection_keeps_state_admissible() {
        let mut st = Stepper::new(Clamped, 0.0, &[1.0], Tolerances::default());
        st.advance_to(3.0).unwrap();
        assert_eq!(st.y()[0], 0.0);
    }
}
