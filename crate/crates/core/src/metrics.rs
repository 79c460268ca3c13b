//! How well first-layer features recover the hidden subspace, and test error.

use alloc::format;
use alloc::vec::Vec;
#[allow(unused_imports)] // shadowed by std float methods when std is linked
use num_traits::Float;

use crate::error::{Error, Result};
use crate::linalg::{dot, norm, orthonormalize_rows, Matrix, SymMatrix};
use crate::losses::LossFunction;
use crate::network::{Activation, NetworkParams};
use crate::rng;
use crate::targets::{HiddenSubspace, MultiIndexTarget};

pub const DEFAULT_TEST_SAMPLES: usize = 10_000;

/// Rows of `W` whose Euclidean norm is below this are treated as zero.
const ZERO_ROW: f64 = 0.0;
const RANK_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
pub struct RecoveryReport {
    pub cos_best: f64,
    pub per_direction: Vec<f64>,
    pub coverage_min: f64,
    pub principal_angles: Vec<f64>,
    pub test_error: Option<f64>,
}

fn check_dims(w: &Matrix, u: &HiddenSubspace) -> Result<()> {
    if w.cols() != u.d() {
        return Err(Error::dim(format!(
            "features in R^{} but subspace in R^{}",
            w.cols(),
            u.d()
        )));
    }
    Ok(())
}

/// `|cos(w_j, u_k)|` for every nonzero row, as a `(rows, r)` table.
fn abs_cosines(w: &Matrix, u: &HiddenSubspace) -> Result<Vec<Vec<f64>>> {
    check_dims(w, u)?;
    let table: Vec<Vec<f64>> = w
        .row_iter()
        .filter_map(|row| {
            let n = norm(row);
            (n > ZERO_ROW && n.is_finite()).then(|| {
                (0..u.r())
                    .map(|k| (dot(row, u.direction(k)).abs() / n).min(1.0))
                    .collect()
            })
        })
        .collect();
    if table.is_empty() {
        return Err(Error::UndefinedMetric(
            "every feature row is zero".into(),
        ));
    }
    Ok(table)
}

/// Entry `k` is `max_j |cos(w_j, u_k)|`.
pub fn direction_coverage(w: &Matrix, u: &HiddenSubspace) -> Result<Vec<f64>> {
    let table = abs_cosines(w, u)?;
    Ok((0..u.r())
        .map(|k| table.iter().map(|row| row[k]).fold(0.0, f64::max))
        .collect())
}

/// `max_{j,k} |cos(w_j, u_k)|`.
pub fn cos_best(w: &Matrix, u: &HiddenSubspace) -> Result<f64> {
    Ok(direction_coverage(w, u)?
        .into_iter()
        .fold(0.0, f64::max))
}

/// Rows normalized, sign-fixed (first largest-magnitude entry positive) and sorted,
/// so that row order and row signs of the input cannot change the result.
fn canonical_rows(w: &Matrix) -> Matrix {
    let mut rows: Vec<Vec<f64>> = w
        .row_iter()
        .filter(|r| norm(r) > ZERO_ROW)
        .map(|r| {
            let n = norm(r);
            let mut v: Vec<f64> = r.iter().map(|x| x / n).collect();
            let mut lead = 0;
            for (i, x) in v.iter().enumerate() {
                if x.abs() > v[lead].abs() {
                    lead = i;
                }
            }
            if v[lead] < 0.0 {
                v.iter_mut().for_each(|x| *x = -*x);
            }
            v
        })
        .collect();
    rows.sort_by(|a, b| {
        a.iter()
            .zip(b)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(core::cmp::Ordering::Equal)
    });
    let d = w.cols();
    let mut out = Matrix::zeros(rows.len(), d);
    for (i, r) in rows.iter().enumerate() {
        out.row_mut(i).copy_from_slice(r);
    }
    out
}

/// Principal angles between `span(rows of W)` and `span(U)`, ascending, in
/// `[0, π/2]`. There are `min(rank W, r)` of them.
///
/// Cosines come from the cross-Gram matrix and sines from the residual of
/// projecting one basis on the other, so both small and large angles are accurate.
pub fn principal_angles(w: &Matrix, u: &HiddenSubspace) -> Result<Vec<f64>> {
    check_dims(w, u)?;
    let (qw, _) = orthonormalize_rows(&canonical_rows(w), RANK_TOL);
    if qw.rows() == 0 {
        return Err(Error::UndefinedMetric("features span the zero subspace".into()));
    }
    let qu = u.basis();
    let (small, large) = if qw.rows() <= qu.rows() {
        (&qw, qu)
    } else {
        (qu, &qw)
    };
    let k = small.rows();
    let d = small.cols();
    // M = small · largeᵀ
    let cross = Matrix::from_fn(k, large.rows(), |i, j| dot(small.row(i), large.row(j)));
    // R = small − M · large
    let mut resid = small.clone();
    for i in 0..k {
        let row = resid.row_mut(i);
        for j in 0..large.rows() {
            let c = cross.get(i, j);
            for (r, l) in row.iter_mut().zip(large.row(j)) {
                *r -= c * l;
            }
        }
    }
    debug_assert_eq!(resid.cols(), d);
    let mut cos2 = SymMatrix::from_matrix(&cross.gram_rows())?.eigen()?.values;
    let mut sin2 = SymMatrix::from_matrix(&resid.gram_rows())?.eigen()?.values;
    cos2.sort_by(|a, b| b.total_cmp(a));
    sin2.sort_by(f64::total_cmp);
    Ok(cos2
        .iter()
        .zip(&sin2)
        .map(|(&c, &s)| {
            s.max(0.0)
                .sqrt()
                .atan2(c.max(0.0).sqrt())
                .clamp(0.0, core::f64::consts::FRAC_PI_2)
        })
        .collect())
}

pub fn recovery_report(w: &Matrix, u: &HiddenSubspace) -> Result<RecoveryReport> {
    let per_direction = direction_coverage(w, u)?;
    let cos_best = per_direction.iter().copied().fold(0.0, f64::max);
    let coverage_min = per_direction.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(RecoveryReport {
        cos_best,
        coverage_min,
        per_direction,
        principal_angles: principal_angles(w, u)?,
        test_error: None,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ErrorMetric {
    /// `(f(x) − f*(x))²`
    Mse,
    /// `ℓ(f(x), f*(x))`
    Loss(LossFunction),
}

/// Monte-Carlo test error with its standard error.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TestEstimate {
    pub mean: f64,
    pub standard_error: f64,
}

/// Averages the metric over `n_test` fresh Gaussian inputs from `seed`; the
/// inputs are generated one at a time, so memory does not grow with `n_test`.
pub fn test_error_estimate(
    params: &NetworkParams,
    act: Activation,
    target: &MultiIndexTarget,
    metric: ErrorMetric,
    n_test: usize,
    seed: u64,
) -> Result<TestEstimate> {
    if n_test == 0 {
        return Err(Error::param("n_test", "must be at least 1"));
    }
    if params.d() != target.d() {
        return Err(Error::dim(format!(
            "network on R^{} but target on R^{}",
            params.d(),
            target.d()
        )));
    }
    let mut g = rng::seeded(seed);
    let mut x = alloc::vec![0.0; target.d()];
    let (mut s, mut s2) = (0.0, 0.0);
    for _ in 0..n_test {
        rng::fill_standard_normal(&mut g, &mut x);
        let f = params.forward(act, &x);
        let y = target.eval(&x);
        let v = match metric {
            ErrorMetric::Mse => (f - y) * (f - y),
            ErrorMetric::Loss(l) => l.value(f, y),
        };
        s += v;
        s2 += v * v;
    }
    let n = n_test as f64;
    let mean = s / n;
    let var = if n_test > 1 {
        ((s2 / n - mean * mean) * n / (n - 1.0)).max(0.0)
    } else {
        0.0
    };
    Ok(TestEstimate {
        mean,
        standard_error: (var / n).sqrt(),
    })
}

pub fn test_error(
    params: &NetworkParams,
    act: Activation,
    target: &MultiIndexTarget,
    metric: ErrorMetric,
    n_test: usize,
    seed: u64,
) -> Result<f64> {
    Ok(test_error_estimate(params, act, target, metric, n_test, seed)?.mean)
}
