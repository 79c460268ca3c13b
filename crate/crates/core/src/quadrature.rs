//! Gauss–Legendre and Gauss–Hermite rules.

use alloc::format;
use alloc::vec::Vec;
use core::f64::consts::PI;
#[allow(unused_imports)] // shadowed by std float methods when std is linked
use num_traits::Float;

use crate::error::{Error, Result};
use crate::linalg::{Matrix, SymMatrix};

/// Nodes and weights of a quadrature rule.
#[derive(Clone, Debug, PartialEq)]
pub struct Rule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Rule {
    /// `Σ_k w_k f(x_k)`.
    pub fn apply(&self, mut f: impl FnMut(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }

    /// Integral of `f` over `[lo, hi]` using this rule mapped from `[−1, 1]`.
    pub fn integrate(&self, lo: f64, hi: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
        let half = 0.5 * (hi - lo);
        let mid = 0.5 * (hi + lo);
        half * self.apply(|t| f(mid + half * t))
    }
}

/// `order`-point Gauss–Legendre rule on `[−1, 1]`, nodes ascending.
pub fn gauss_legendre(order: usize) -> Result<Rule> {
    if order == 0 {
        return Err(Error::param("quad_order", "must be positive"));
    }
    let n = order;
    let mut nodes = alloc::vec![0.0; n];
    let mut weights = alloc::vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        // Tricomi's initial guess for the i-th largest root.
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() <= 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    Ok(Rule { nodes, weights })
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let p = if n == 0 { 1.0 } else { p1 };
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p, d)
}

/// `order`-point Gauss–Hermite rule for the standard Gaussian measure (weights sum
/// to one), from the eigendecomposition of the Jacobi matrix.
pub fn gauss_hermite_probabilists(order: usize) -> Result<Rule> {
    if order == 0 {
        return Err(Error::param("quad_order", "must be positive"));
    }
    let mut j = Matrix::zeros(order, order);
    for k in 1..order {
        let off = (k as f64).sqrt();
        j.set(k - 1, k, off);
        j.set(k, k - 1, off);
    }
    let eig = SymMatrix::from_matrix(&j)?.eigen()?;
    let weights: Vec<f64> = (0..order)
        .map(|k| {
            let v0 = eig.vectors.get(0, k);
            v0 * v0
        })
        .collect();
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > 1e-8 {
        return Err(Error::UndefinedMetric(format!(
            "Gauss-Hermite weights sum to {total}"
        )));
    }
    Ok(Rule {
        nodes: eig.values,
        weights,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn legendre_integrates_polynomials_exactly() {
        let r = gauss_legendre(5).unwrap();
        // degree ≤ 9 is exact
        let v = r.integrate(-1.0, 2.0, |x| x.powi(9) - 3.0 * x * x);
        let exact = (2f64.powi(10) - 1.0) / 10.0 - (8.0 + 1.0);
        assert!((v - exact).abs() < 1e-12);
        assert!((r.weights.iter().sum::<f64>() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn high_order_legendre_is_accurate() {
        let r = gauss_legendre(64).unwrap();
        let v = r.integrate(0.0, PI, f64::sin);
        assert!((v - 2.0).abs() < 1e-14);
        for w in r.nodes.windows(2) {
            assert!(w[0] < w[1]);
        }
    }

    #[test]
    fn hermite_rule_reproduces_gaussian_moments() {
        let r = gauss_hermite_probabilists(10).unwrap();
        assert!((r.apply(|x| x * x) - 1.0).abs() < 1e-12);
        assert!((r.apply(|x| x.powi(4)) - 3.0).abs() < 1e-11);
        assert!((r.apply(|x| x.powi(6)) - 15.0).abs() < 1e-10);
        assert!(r.apply(|x| x.powi(3)).abs() < 1e-12);
    }
}
