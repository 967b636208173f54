//! Integer-order Bessel functions of the first kind for the micromotion
//! sideband weights.

/// Highest sideband order kept for modulation index `beta`.
pub fn sideband_cutoff(beta: f64) -> usize {
    (beta + 8.0 * beta.cbrt() + 12.0).ceil() as usize
}

/// `J_0(β), …, J_{n_max}(β)` by Miller's backward recurrence, normalised
/// with `J_0 + 2 Σ J_{2k} = 1`.
pub fn bessel_j_upto(n_max: usize, beta: f64) -> Vec<f64> {
    let mut out = vec![0.0; n_max + 1];
    if beta == 0.0 {
        out[0] = 1.0;
        return out;
    }
    let x = beta.abs();
    let start = n_max.max(sideband_cutoff(x)) + 20;
    let mut buf = vec![0.0; start + 2];
    buf[start] = 1e-300;
    for k in (1..=start).rev() {
        buf[k - 1] = 2.0 * k as f64 / x * buf[k] - buf[k + 1];
        if buf[k - 1].abs() > 1e250 {
            for v in buf[k - 1..].iter_mut() {
                *v *= 1e-250;
            }
        }
    }
    let mut norm = buf[0];
    let mut k = 2;
    while k <= start {
        norm += 2.0 * buf[k];
        k += 2;
    }
    for n in 0..=n_max {
        out[n] = buf[n] / norm;
    }
    if beta < 0.0 {
        for (n, v) in out.iter_mut().enumerate() {
            if n % 2 == 1 {
                *v = -*v;
            }
        }
    }
    out
}

/// Squared sideband weights `J_n²(β)` for `n = 0..=sideband_cutoff(β)`.
pub fn sideband_weights(beta: f64) -> Vec<f64> {
    bessel_j_upto(sideband_cutoff(beta.abs()), beta).into_iter().map(|j| j * j).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::periodic_mean;

    // J_n(β) = <cos(nθ - β sin θ)> over one period.
    fn oracle(n: usize, beta: f64) -> f64 {
        periodic_mean(512, |t| (n as f64 * t - beta * t.sin()).cos())
    }

    #[test]
    fn matches_integral_representation() {
        for &beta in &[1e-6, 0.3, 1.0, 2.0, 7.5, 20.0, 37.0] {
            let j = bessel_j_upto(sideband_cutoff(beta), beta);
            for (n, v) in j.iter().enumerate() {
                assert!((v - oracle(n, beta)).abs() < 1e-13, "n={n} beta={beta}: {v}");
            }
        }
    }

    #[test]
    fn sum_rule_at_cutoff() {
        for i in 0..=200 {
            let beta = 0.1 * i as f64;
            let w = sideband_weights(beta);
            let total = w[0] + 2.0 * w[1..].iter().sum::<f64>();
            assert!((total - 1.0).abs() < 1e-12, "beta={beta}: {total}");
        }
    }

    #[test]
    fn zero_index_is_carrier_only() {
        let w = sideband_weights(0.0);
        assert_eq!(w[0], 1.0);
        assert!(w[1..].iter().all(|v| *v == 0.0));
    }

    #[test]
    fn known_values() {
        // J_0(1), J_1(1) to 15 digits.
        let j = bessel_j_upto(2, 1.0);
        assert!((j[0] - 0.765_197_686_557_966_6).abs() < 1e-15);
        assert!((j[1] - 0.440_050_585_744_933_5).abs() < 1e-15);
        let jn = bessel_j_upto(1, -1.0);
        assert!((jn[1] + 0.440_050_585_744_933_5).abs() < 1e-15);
    }
}
