//! Summation and periodic quadrature helpers shared by the rate integrals.

/// Pairwise (cascade) summation in a fixed order.
///
/// The reduction tree depends only on the slice length, so the result is
/// bitwise reproducible for a given input ordering.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const BLOCK: usize = 32;
    if values.len() <= BLOCK {
        let mut acc = 0.0;
        for v in values {
            acc += v;
        }
        return acc;
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

/// Nodes `φ_j = 2π (j + 1/2) / n` of the shifted periodic trapezoid rule.
///
/// The half-node shift keeps the node set invariant under `φ → φ + π` and
/// `φ → π - φ`, which preserves the sine symmetries exactly.
pub fn periodic_nodes(n: usize) -> Vec<f64> {
    let h = std::f64::consts::TAU / n as f64;
    (0..n).map(|j| (j as f64 + 0.5) * h).collect()
}

/// Mean of a 2π-periodic function over one period by the trapezoid rule.
pub fn periodic_mean<F: Fn(f64) -> f64>(n: usize, f: F) -> f64 {
    let vals: Vec<f64> = periodic_nodes(n).into_iter().map(f).collect();
    pairwise_sum(&vals) / n as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairwise_matches_naive_on_integers() {
        let v: Vec<f64> = (1..=1000).map(|i| i as f64).collect();
        assert_eq!(pairwise_sum(&v), 500_500.0);
        assert_eq!(pairwise_sum(&[]), 0.0);
    }

    #[test]
    fn periodic_mean_is_spectral_for_trig_polynomials() {
        let m = periodic_mean(16, |p| 1.0 + p.sin().powi(2) + (3.0 * p).cos());
        assert!((m - 1.5).abs() < 1e-15);
    }
}
