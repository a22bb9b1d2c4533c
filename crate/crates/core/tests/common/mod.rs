//! Shared oracles for the integration suites: tensor-product
//! Gauss–Legendre quadrature on the unit cube and distributional test
//! statistics. Everything here is derived from first principles so the
//! suites never validate the library against itself.
#![allow(dead_code)]

use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Gauss–Legendre nodes and weights on [0, 1]; exact for polynomials of
/// degree `2n - 1`. Nodes come from Newton iteration on the Legendre
/// recurrence, seeded with the Chebyshev approximation to the k-th root.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for k in 0..n {
        let mut x = (std::f64::consts::PI * (k as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut derivative = 0.0;
        for _ in 0..100 {
            // Evaluate P_n and P_n' via (j+1) P_{j+1} = (2j+1) x P_j - j P_{j-1}.
            let (mut prev, mut curr) = (1.0, x);
            for j in 1..n {
                let next =
                    ((2 * j + 1) as f64 * x * curr - j as f64 * prev) / (j + 1) as f64;
                prev = curr;
                curr = next;
            }
            derivative = n as f64 * (x * curr - prev) / (x * x - 1.0);
            let step = curr / derivative;
            x -= step;
            if step.abs() < 1e-15 {
                break;
            }
        }
        nodes[k] = (1.0 - x) / 2.0; // descending roots -> ascending nodes
        weights[k] = 1.0 / ((1.0 - x * x) * derivative * derivative);
    }
    (nodes, weights)
}

/// Tensor-product quadrature of `f` over the unit cube.
pub fn quadrature_unit_cube<F>(dimension: usize, nodes_per_axis: usize, mut f: F) -> f64
where
    F: FnMut(&[f64]) -> f64,
{
    let (nodes, weights) = gauss_legendre(nodes_per_axis);
    let mut index = vec![0usize; dimension];
    let mut point = vec![0.0; dimension];
    let mut total = 0.0;
    'outer: loop {
        let mut weight = 1.0;
        for (axis, &k) in index.iter().enumerate() {
            point[axis] = nodes[k];
            weight *= weights[k];
        }
        total += weight * f(&point);
        for axis in (0..dimension).rev() {
            index[axis] += 1;
            if index[axis] < nodes_per_axis {
                continue 'outer;
            }
            index[axis] = 0;
        }
        return total;
    }
}

/// Quadrature of `f` over an axis-aligned box inside the unit cube.
pub fn quadrature_box<F>(lower: &[f64], upper: &[f64], nodes_per_axis: usize, mut f: F) -> f64
where
    F: FnMut(&[f64]) -> f64,
{
    let d = lower.len();
    let volume: f64 = lower.iter().zip(upper).map(|(a, b)| b - a).product();
    volume
        * quadrature_unit_cube(d, nodes_per_axis, |unit| {
            let point: Vec<f64> = unit
                .iter()
                .zip(lower.iter().zip(upper))
                .map(|(&u, (&a, &b))| a + (b - a) * u)
                .collect();
            f(&point)
        })
}

/// Two-sided Kolmogorov–Smirnov distance of a sample to Uniform(0, 1).
pub fn ks_uniform_statistic(sample: &[f64]) -> f64 {
    let mut sorted = sample.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let above = (i as f64 + 1.0) / n - x;
            let below = x - i as f64 / n;
            above.max(below)
        })
        .fold(0.0, f64::max)
}

/// Asymptotic KS critical value at significance 0.01.
pub fn ks_critical_at_01(n: usize) -> f64 {
    1.6276 / (n as f64).sqrt()
}

/// Pearson chi-square statistic against expected cell counts.
pub fn chi_square_statistic(observed: &[u64], expected: &[f64]) -> f64 {
    assert_eq!(observed.len(), expected.len());
    observed
        .iter()
        .zip(expected)
        .map(|(&o, &e)| {
            assert!(e > 0.0, "expected counts must be positive");
            let diff = o as f64 - e;
            diff * diff / e
        })
        .sum()
}

pub fn chi_square_quantile(degrees_of_freedom: usize, p: f64) -> f64 {
    ChiSquared::new(degrees_of_freedom as f64)
        .expect("positive degrees of freedom")
        .inverse_cdf(p)
}

#[cfg(test)]
mod self_checks {
    use super::*;

    #[test]
    fn quadrature_is_exact_on_polynomials() {
        // integral of x^4 y^2 over the unit square = 1/15.
        let got = quadrature_unit_cube(2, 8, |p| p[0].powi(4) * p[1].powi(2));
        assert!((got - 1.0 / 15.0).abs() < 1e-14);
        let flat = quadrature_unit_cube(3, 4, |_| 1.0);
        assert!((flat - 1.0).abs() < 1e-14);
        // Box quadrature of 2x over [0.25, 0.75] x [0, 1] = 0.5.
        let boxed = quadrature_box(&[0.25, 0.0], &[0.75, 1.0], 6, |p| 2.0 * p[0]);
        assert!((boxed - 0.5).abs() < 1e-14);
    }

    #[test]
    fn ks_statistic_matches_hand_value() {
        // Sample {0.1, 0.6}: sup gap is |1/2 - 0.1| = 0.4.
        let stat = ks_uniform_statistic(&[0.6, 0.1]);
        assert!((stat - 0.4).abs() < 1e-12);
    }

    #[test]
    fn chi_square_matches_hand_value() {
        // (10-8)^2/8 + (6-8)^2/8 = 1.
        let stat = chi_square_statistic(&[10, 6], &[8.0, 8.0]);
        assert!((stat - 1.0).abs() < 1e-12);
        // Median of chi-square(1) is about 0.4549.
        assert!((chi_square_quantile(1, 0.5) - 0.4549).abs() < 1e-3);
    }
}
