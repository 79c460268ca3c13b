//! Label-weighted second-moment matrices and the power-iteration picture of
//! stage-1 training.
//!
//! `Σ̂_ℓ = (1/n) Σ_i ℓ_i x_i x_iᵀ` with `ℓ_i = ℓ'(0, y_i)`. Its population
//! counterpart `Σ_ℓ` has rank at most `r` and column space inside the hidden
//! subspace, and a few steps of gradient descent from a tiny initialization move
//! each neuron like `(−a_j η)^T Σ̂_ℓ^T w_j`.

use alloc::format;
use alloc::vec::Vec;
#[allow(unused_imports)] // shadowed by std float methods when std is linked
use num_traits::Float;

use crate::error::{Error, Result};
use crate::linalg::{axpy, dot, norm, Matrix, SymMatrix};
use crate::losses::LossFunction;
use crate::rng;
use crate::stats;
use crate::targets::{HiddenSubspace, MultiIndexTarget};

/// `(1/n) Σ_i ℓ_i x_i x_iᵀ`, built from the upper triangle and mirrored.
pub fn empirical_sigma(x: &Matrix, ell: &[f64]) -> Result<SymMatrix> {
    let (n, d) = (x.rows(), x.cols());
    if n == 0 {
        return Err(Error::param("n", "empirical matrix needs at least one sample"));
    }
    if ell.len() != n {
        return Err(Error::dim(format!("{n} inputs but {} weights", ell.len())));
    }
    let mut acc = Matrix::zeros(d, d);
    for (xi, &li) in x.row_iter().zip(ell) {
        if li == 0.0 {
            continue;
        }
        for r in 0..d {
            let c = li * xi[r];
            axpy(c, &xi[r..], &mut acc.row_mut(r)[r..]);
        }
    }
    acc.scale(1.0 / n as f64);
    SymMatrix::from_upper(acc)
}

/// Monte-Carlo estimate of `Σ_ℓ` with per-entry standard errors.
#[derive(Clone, Debug)]
pub struct PopulationSigma {
    pub sigma: SymMatrix,
    /// Standard error of each entry.
    pub standard_error: Matrix,
    /// `‖standard_error‖_F`, the scale used for "within MC noise" comparisons.
    pub frobenius_error: f64,
    /// Sample mean of `ℓ'(0, y)` (subtracted when centering).
    pub mean_preproc: f64,
    pub n_mc: usize,
}

pub const MIN_MC_SAMPLES: usize = 10_000;

/// Estimates `E[ℓ'(0, y) x xᵀ]` from `n_mc` fresh samples drawn from `seed`.
///
/// With `center`, the preprocessing values are centered by their sample mean (a
/// first pass over the same stream), matching `preprocess(.., center = true)`.
pub fn population_sigma(
    target: &MultiIndexTarget,
    loss: &LossFunction,
    n_mc: usize,
    seed: u64,
    center: bool,
) -> Result<PopulationSigma> {
    if n_mc < MIN_MC_SAMPLES {
        return Err(Error::param(
            "n_mc",
            format!("need at least {MIN_MC_SAMPLES} Monte-Carlo samples, got {n_mc}"),
        ));
    }
    let d = target.d();
    let mut x = alloc::vec![0.0; d];

    let mut mean = 0.0;
    if center {
        let mut g = rng::seeded(seed);
        let mut s = 0.0;
        for _ in 0..n_mc {
            rng::fill_standard_normal(&mut g, &mut x);
            s += loss.d1(0.0, target.eval(&x));
        }
        mean = s / n_mc as f64;
    }

    let mut g = rng::seeded(seed);
    let mut sum = Matrix::zeros(d, d);
    let mut sum_sq = Matrix::zeros(d, d);
    let mut term = alloc::vec![0.0; d];
    for _ in 0..n_mc {
        rng::fill_standard_normal(&mut g, &mut x);
        let li = loss.d1(0.0, target.eval(&x)) - mean;
        if li == 0.0 {
            continue;
        }
        for r in 0..d {
            let c = li * x[r];
            let row = &x[r..];
            for (t, &v) in term[..d - r].iter_mut().zip(row) {
                *t = c * v;
            }
            let s_row = &mut sum.row_mut(r)[r..];
            for (s, t) in s_row.iter_mut().zip(&term[..d - r]) {
                *s += t;
            }
            let q_row = &mut sum_sq.row_mut(r)[r..];
            for (q, t) in q_row.iter_mut().zip(&term[..d - r]) {
                *q += t * t;
            }
        }
    }
    let nf = n_mc as f64;
    let mut se = Matrix::zeros(d, d);
    let mut fro = 0.0;
    for r in 0..d {
        for c in r..d {
            let m = sum.get(r, c) / nf;
            let var = (sum_sq.get(r, c) / nf - m * m).max(0.0) * nf / (nf - 1.0);
            let e = (var / nf).sqrt();
            se.set(r, c, e);
            se.set(c, r, e);
            fro += if r == c { e * e } else { 2.0 * e * e };
        }
    }
    sum.scale(1.0 / nf);
    Ok(PopulationSigma {
        sigma: SymMatrix::from_upper(sum)?,
        standard_error: se,
        frobenius_error: fro.sqrt(),
        mean_preproc: mean,
        n_mc,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum RankRule {
    /// The rank is known.
    Fixed(usize),
    /// Count eigenvalues with `|λ| ≥ τ·|λ₁|`.
    Threshold(f64),
}

pub const DEFAULT_RANK_THRESHOLD: f64 = 0.2;

impl Default for RankRule {
    fn default() -> Self {
        RankRule::Threshold(DEFAULT_RANK_THRESHOLD)
    }
}

#[derive(Clone, Debug)]
pub struct SpectralReport {
    /// Sorted by magnitude, largest first.
    pub eigenvalues: Vec<f64>,
    /// Eigenvectors as columns, in the order of `eigenvalues`.
    pub eigenvectors: Matrix,
    pub r_hat: usize,
    /// `|λ₁| / |λ_r̂|`; `None` when `r̂ = 0`.
    pub kappa_hat: Option<f64>,
    pub rule: RankRule,
    pub degenerate: bool,
}

impl SpectralReport {
    /// The leading `r̂` eigenvectors as rows.
    pub fn top_basis(&self) -> Matrix {
        let d = self.eigenvectors.rows();
        Matrix::from_fn(self.r_hat, d, |k, i| self.eigenvectors.get(i, k))
    }

    pub fn vector(&self, k: usize) -> Vec<f64> {
        (0..self.eigenvectors.rows())
            .map(|i| self.eigenvectors.get(i, k))
            .collect()
    }
}

pub fn eigen_report(sigma: &SymMatrix, rule: RankRule) -> Result<SpectralReport> {
    if !sigma.as_matrix().is_finite() {
        return Err(Error::param("sigma", "matrix has non-finite entries"));
    }
    let d = sigma.dim();
    let eig = sigma.eigen()?;
    let mut order: Vec<usize> = (0..d).collect();
    // Stable on ties: larger magnitude first, then the positive eigenvalue.
    order.sort_by(|&i, &j| {
        eig.values[j]
            .abs()
            .total_cmp(&eig.values[i].abs())
            .then(eig.values[j].total_cmp(&eig.values[i]))
    });
    let eigenvalues: Vec<f64> = order.iter().map(|&i| eig.values[i]).collect();
    let eigenvectors = Matrix::from_fn(d, d, |r, c| eig.vectors.get(r, order[c]));
    let top = eigenvalues.first().map_or(0.0, |v| v.abs());

    let r_hat = match rule {
        RankRule::Fixed(r) => {
            if r > d {
                return Err(Error::dim(format!("rank {r} exceeds dimension {d}")));
            }
            if r > 0 && eigenvalues[r - 1] == 0.0 {
                return Err(Error::DegenerateSpectrum(format!(
                    "eigenvalue {r} of a rank-{r} matrix is zero"
                )));
            }
            r
        }
        RankRule::Threshold(tau) => {
            if !(tau > 0.0 && tau <= 1.0) {
                return Err(Error::param("rank_threshold", format!("must lie in (0, 1], got {tau}")));
            }
            if top == 0.0 {
                0
            } else {
                eigenvalues.iter().filter(|v| v.abs() >= tau * top).count()
            }
        }
    };
    let kappa_hat = if r_hat == 0 {
        None
    } else {
        Some(top / eigenvalues[r_hat - 1].abs())
    };
    Ok(SpectralReport {
        eigenvalues,
        eigenvectors,
        r_hat,
        kappa_hat,
        rule,
        degenerate: r_hat == 0,
    })
}

/// The idealized stage-1 features: row `j` is
/// `(1/ε₀)·(−a_j η)^T·Σ^T w_j`.
pub fn oracle_features(
    w0: &Matrix,
    a: &[f64],
    sigma: &SymMatrix,
    eta: f64,
    steps: usize,
    eps0: f64,
) -> Result<Matrix> {
    let (m, d) = (w0.rows(), w0.cols());
    if a.len() != m || sigma.dim() != d {
        return Err(Error::dim(format!(
            "W0 is {m}x{d}, a has {}, sigma is {}x{}",
            a.len(),
            sigma.dim(),
            sigma.dim()
        )));
    }
    let mut out = Matrix::zeros(m, d);
    for j in 0..m {
        let mut v = w0.row(j).to_vec();
        let mut coeff = 1.0;
        for _ in 0..steps {
            v = sigma.mul_vec(&v)?;
            coeff *= -a[j] * eta;
        }
        for (dst, x) in out.row_mut(j).iter_mut().zip(&v) {
            *dst = coeff * x / eps0;
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct DeviationReport {
    /// `‖w_j − ŵ_j‖ / ‖ŵ_j‖` per neuron.
    pub per_neuron: Vec<f64>,
    pub max: f64,
    pub median: f64,
}

const TINY_NORM: f64 = 1e-300;

pub fn deviation_report(trained: &Matrix, oracle: &Matrix) -> Result<DeviationReport> {
    trained.check_same_shape(oracle)?;
    if trained.rows() == 0 {
        return Err(Error::dim("no neurons to compare"));
    }
    let mut diff = alloc::vec![0.0; trained.cols()];
    let per_neuron: Vec<f64> = trained
        .row_iter()
        .zip(oracle.row_iter())
        .map(|(t, o)| {
            for ((dst, a), b) in diff.iter_mut().zip(t).zip(o) {
                *dst = a - b;
            }
            norm(&diff) / norm(o).max(TINY_NORM)
        })
        .collect();
    let max = per_neuron.iter().copied().fold(0.0, f64::max);
    let median = stats::median(&per_neuron)?;
    Ok(DeviationReport {
        per_neuron,
        max,
        median,
    })
}

/// `‖Σ̂ − Σ‖_op`.
pub fn noise_norm(empirical: &SymMatrix, population: &SymMatrix) -> Result<f64> {
    empirical.sub(population)?.op_norm()
}

/// `‖(I − P_U) Σ‖_op`: how much of `Σ` acts outside the hidden subspace.
pub fn off_subspace_norm(sigma: &SymMatrix, subspace: &HiddenSubspace) -> Result<f64> {
    let d = sigma.dim();
    if subspace.d() != d {
        return Err(Error::dim(format!(
            "subspace in R^{} for a {d}x{d} matrix",
            subspace.d()
        )));
    }
    // Columns of Σ with their U-components removed.
    let mut resid = Matrix::zeros(d, d);
    let mut col = alloc::vec![0.0; d];
    for c in 0..d {
        for (i, v) in col.iter_mut().enumerate() {
            *v = sigma.get(i, c);
        }
        for k in 0..subspace.r() {
            let u = subspace.direction(k);
            let p = dot(u, &col);
            axpy(-p, u, &mut col);
        }
        for (i, &v) in col.iter().enumerate() {
            resid.set(c, i, v);
        }
    }
    // resid holds Rᵀ row-wise; ‖R‖² = λ_max(Rᵀ R) = λ_max of the row Gram matrix.
    let gram = SymMatrix::from_matrix(&resid.gram_rows())?;
    Ok(gram.op_norm()?.max(0.0).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::targets::{LinkFunction, Monomial, SparsePoly};

    #[test]
    fn empirical_examples() {
        let x = Matrix::from_rows(&[[1.0, 0.0]]).unwrap();
        let s = empirical_sigma(&x, &[2.0]).unwrap();
        assert_eq!(s.as_matrix(), SymMatrix::diag(&[2.0, 0.0]).as_matrix());
        let x = Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0]]).unwrap();
        let s = empirical_sigma(&x, &[1.0, -1.0]).unwrap();
        assert_eq!(s.as_matrix(), SymMatrix::diag(&[0.5, -0.5]).as_matrix());
        let s = empirical_sigma(&x, &[0.0, 0.0]).unwrap();
        assert_eq!(s.as_matrix().max_abs(), 0.0);
        assert!(empirical_sigma(&Matrix::zeros(0, 2), &[]).is_err());
        assert!(empirical_sigma(&x, &[1.0]).is_err());
    }

    #[test]
    fn report_examples() {
        let r = eigen_report(&SymMatrix::diag(&[2.0, 1.0, 0.0]), RankRule::Fixed(2)).unwrap();
        assert_eq!(r.r_hat, 2);
        assert_eq!(r.kappa_hat, Some(2.0));
        let r = eigen_report(&SymMatrix::zeros(3), RankRule::Threshold(0.1)).unwrap();
        assert_eq!(r.r_hat, 0);
        assert!(r.degenerate);
        assert_eq!(r.kappa_hat, None);
        let r = eigen_report(&SymMatrix::diag(&[1.0, -1.0 / 3.0]), RankRule::Fixed(2)).unwrap();
        assert!((r.kappa_hat.unwrap() - 3.0).abs() < 1e-15);
        assert!(matches!(
            eigen_report(&SymMatrix::diag(&[1.0, 0.0]), RankRule::Fixed(2)),
            Err(Error::DegenerateSpectrum(_))
        ));
        let r = eigen_report(&SymMatrix::diag(&[0.1, -3.0, 1.0]), RankRule::Threshold(0.2)).unwrap();
        assert_eq!(r.eigenvalues, alloc::vec![-3.0, 1.0, 0.1]);
        assert_eq!(r.r_hat, 2);
        assert_eq!(r.top_basis().row(0), &[0.0, r.eigenvectors.get(1, 0), 0.0]);
    }

    #[test]
    fn oracle_examples() {
        let eps = 1e-3;
        let w0 = Matrix::from_rows(&[[eps, 2.0 * eps]]).unwrap();
        let o = oracle_features(&w0, &[1.0], &SymMatrix::identity(2), 0.5, 1, eps).unwrap();
        assert!((o.get(0, 0) + 0.5).abs() < 1e-15 && (o.get(0, 1) + 1.0).abs() < 1e-15);

        let s = SymMatrix::diag(&[1.0, 0.5]);
        let r = eps / 2f64.sqrt();
        let w0 = Matrix::from_rows(&[[r, r]]).unwrap();
        let eta = 0.3;
        let o = oracle_features(&w0, &[1.0], &s, eta, 2, eps).unwrap();
        let c = eta * eta / 2f64.sqrt();
        assert!((o.get(0, 0) - c).abs() < 1e-15);
        assert!((o.get(0, 1) - 0.25 * c).abs() < 1e-15);
    }

    #[test]
    fn oracle_is_homogeneous_in_eta() {
        let mut g = rng::seeded(1);
        let d = 6;
        let b = Matrix::from_vec(d, d, rng::gaussian_vec(&mut g, d * d)).unwrap();
        let s = SymMatrix::from_matrix(&b).unwrap();
        let w0 = Matrix::from_vec(3, d, rng::gaussian_vec(&mut g, 3 * d)).unwrap();
        let a = [1.0, -1.0, 1.0];
        for t in 1..5 {
            let o1 = oracle_features(&w0, &a, &s, 0.37, t, 1e-4).unwrap();
            let mut o2 = oracle_features(&w0, &a, &s, 0.74, t, 1e-4).unwrap();
            o2.scale(1.0 / 2f64.powi(t as i32));
            assert_eq!(o1, o2);
        }
    }

    #[test]
    fn oracle_rows_align_with_top_eigenvector() {
        let s = SymMatrix::diag(&[1.0, 0.6, 0.3, 0.1]);
        let w0 = Matrix::from_rows(&[[0.5, 0.5, 0.5, 0.5]]).unwrap();
        let angle = |t| {
            let o = oracle_features(&w0, &[1.0], &s, 1.0, t, 1.0).unwrap();
            (o.get(0, 0).abs() / norm(o.row(0))).acos()
        };
        assert!(angle(10) <= angle(2));
    }

    #[test]
    fn deviation_and_noise() {
        let a = Matrix::from_rows(&[[1.0, 0.0], [0.0, 2.0]]).unwrap();
        let r = deviation_report(&a, &a).unwrap();
        assert_eq!(r.max, 0.0);
        let b = Matrix::from_rows(&[[1.1, 0.0], [0.0, 2.0]]).unwrap();
        let r = deviation_report(&b, &a).unwrap();
        assert!((r.max - 0.1).abs() < 1e-12);
        let s = SymMatrix::diag(&[1.0, 2.0, 3.0]);
        assert_eq!(noise_norm(&s, &s).unwrap(), 0.0);
        let t = SymMatrix::diag(&[1.1, 2.0, 3.0]);
        assert!((noise_norm(&t, &s).unwrap() - 0.1).abs() < 1e-12);
    }

    #[test]
    fn negative_second_hermite_gives_sqrt2_direction() {
        // y = −h₂(x₁) under the square loss: ℓ'(0, y) = h₂(x₁), E[h₂(x₁) x₁²] = √2.
        let poly = SparsePoly::new(
            1,
            alloc::vec![
                Monomial { exponents: alloc::vec![2], coeff: -1.0 / 2f64.sqrt() },
                Monomial { exponents: alloc::vec![0], coeff: 1.0 / 2f64.sqrt() },
            ],
        )
        .unwrap();
        let target = MultiIndexTarget::axis_aligned(3, LinkFunction::polynomial(poly).unwrap()).unwrap();
        let p = population_sigma(&target, &LossFunction::Square, 200_000, 7, false).unwrap();
        let expect = SymMatrix::diag(&[2f64.sqrt(), 0.0, 0.0]);
        for i in 0..3 {
            for j in 0..3 {
                let dev = (p.sigma.get(i, j) - expect.get(i, j)).abs();
                assert!(dev <= 3.0 * p.standard_error.get(i, j) + 1e-12, "({i},{j}) {dev}");
            }
        }
        let leak = off_subspace_norm(&p.sigma, target.subspace()).unwrap();
        assert!(leak <= 5.0 * p.frobenius_error);
        assert!(population_sigma(&target, &LossFunction::Square, 10, 1, false).is_err());
    }

    #[test]
    fn off_subspace_norm_of_a_contained_matrix_is_zero() {
        let u = HiddenSubspace::axis_aligned(4, 2).unwrap();
        let s = SymMatrix::diag(&[3.0, -1.0, 0.0, 0.0]);
        assert_eq!(off_subspace_norm(&s, &u).unwrap(), 0.0);
        let s = SymMatrix::diag(&[3.0, -1.0, 0.5, 0.0]);
        assert!((off_subspace_norm(&s, &u).unwrap() - 0.5).abs() < 1e-12);
    }
}
