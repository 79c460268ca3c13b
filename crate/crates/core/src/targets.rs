//! Gaussian multi-index targets `f*(x) = g(Ux)` and their datasets.

use alloc::format;
use alloc::vec::Vec;
#[allow(unused_imports)] // shadowed by std float methods when std is linked
use num_traits::Float;

use crate::error::{Error, Result};
use crate::linalg::{dot, orthonormalize_rows, Matrix};
use crate::rng;

/// Normalized probabilist's Hermite polynomial `h_k`, with `E[h_j h_k] = δ_jk`
/// under the standard Gaussian.
///
/// Runs the three-term recurrence `He_{k+1} = z He_k − k He_{k−1}` on the monic
/// polynomials and divides by `√(k!)` at the end.
pub fn hermite_poly(k: u32, z: f64) -> f64 {
    let mut prev = 1.0;
    if k == 0 {
        return prev;
    }
    let mut cur = z;
    for j in 1..k {
        let next = z * cur - f64::from(j) * prev;
        prev = cur;
        cur = next;
    }
    let mut factorial = 1.0;
    for j in 2..=k {
        factorial *= f64::from(j);
    }
    cur / factorial.sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SubspaceMode {
    /// Rows `e_1, …, e_r`.
    AxisAligned,
    /// Orthonormalized i.i.d. Gaussian rows.
    Random { seed: u64 },
}

/// The hidden directions: an `r × d` matrix with orthonormal rows.
#[derive(Clone, Debug, PartialEq)]
pub struct HiddenSubspace {
    basis: Matrix,
}

pub const ORTHONORMALITY_TOL: f64 = 1e-12;

impl HiddenSubspace {
    pub fn new(d: usize, r: usize, mode: SubspaceMode) -> Result<Self> {
        if r == 0 {
            return Err(Error::param("r", "subspace dimension must be at least 1"));
        }
        if r > d {
            return Err(Error::dim(format!("subspace dimension r={r} exceeds d={d}")));
        }
        match mode {
            SubspaceMode::AxisAligned => {
                let basis = Matrix::from_fn(r, d, |i, j| if i == j { 1.0 } else { 0.0 });
                Ok(HiddenSubspace { basis })
            }
            SubspaceMode::Random { seed } => {
                let mut g = rng::seeded(seed);
                // Gaussian rows are independent almost surely; redraw on the
                // (measure-zero) event that one is lost.
                loop {
                    let raw = Matrix::from_vec(r, d, rng::gaussian_vec(&mut g, r * d))?;
                    let (q, kept) = orthonormalize_rows(&raw, 1e-8);
                    if kept.len() == r {
                        return Self::from_rows(q);
                    }
                }
            }
        }
    }

    pub fn axis_aligned(d: usize, r: usize) -> Result<Self> {
        Self::new(d, r, SubspaceMode::AxisAligned)
    }

    /// Wraps an explicit basis, checking `UUᵀ = I_r` to [`ORTHONORMALITY_TOL`].
    pub fn from_rows(basis: Matrix) -> Result<Self> {
        let r = basis.rows();
        if r == 0 || r > basis.cols() {
            return Err(Error::dim(format!(
                "basis of shape {}x{} is not a valid subspace",
                r,
                basis.cols()
            )));
        }
        let s = HiddenSubspace { basis };
        let err = s.orthonormality_error();
        if err > ORTHONORMALITY_TOL {
            return Err(Error::param(
                "U",
                format!("rows are not orthonormal (max |UUᵀ - I| = {err:e})"),
            ));
        }
        Ok(s)
    }

    pub fn d(&self) -> usize {
        self.basis.cols()
    }

    pub fn r(&self) -> usize {
        self.basis.rows()
    }

    pub fn basis(&self) -> &Matrix {
        &self.basis
    }

    pub fn direction(&self, k: usize) -> &[f64] {
        self.basis.row(k)
    }

    /// `‖UUᵀ − I_r‖_max`.
    pub fn orthonormality_error(&self) -> f64 {
        let g = self.basis.gram_rows();
        let mut worst: f64 = 0.0;
        for i in 0..self.r() {
            for j in 0..self.r() {
                let want = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((g.get(i, j) - want).abs());
            }
        }
        worst
    }

    /// Writes `Ux` into `out`.
    pub fn project_into(&self, x: &[f64], out: &mut [f64]) {
        for (o, u) in out.iter_mut().zip(self.basis.row_iter()) {
            *o = dot(u, x);
        }
    }
}

/// One term `coeff · Π_k z_k^{exponents[k]}` of a polynomial link.
#[derive(Clone, Debug, PartialEq)]
pub struct Monomial {
    pub exponents: Vec<u32>,
    pub coeff: f64,
}

/// Sparse polynomial over `arity` variables.
#[derive(Clone, Debug, PartialEq)]
pub struct SparsePoly {
    arity: usize,
    terms: Vec<Monomial>,
}

impl SparsePoly {
    pub fn new(arity: usize, terms: Vec<Monomial>) -> Result<Self> {
        if arity == 0 {
            return Err(Error::param("arity", "polynomial needs at least one variable"));
        }
        for t in &terms {
            if t.exponents.len() != arity {
                return Err(Error::dim(format!(
                    "monomial has {} exponents, polynomial arity is {arity}",
                    t.exponents.len()
                )));
            }
            if !t.coeff.is_finite() {
                return Err(Error::param("coeff", "coefficients must be finite"));
            }
        }
        Ok(SparsePoly { arity, terms })
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn terms(&self) -> &[Monomial] {
        &self.terms
    }

    pub fn degree(&self) -> u32 {
        self.terms
            .iter()
            .filter(|t| t.coeff != 0.0)
            .map(|t| t.exponents.iter().sum::<u32>())
            .max()
            .unwrap_or(0)
    }

    pub fn eval(&self, z: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|t| {
                t.exponents
                    .iter()
                    .zip(z)
                    .fold(t.coeff, |acc, (&e, &zk)| acc * zk.powi(e as i32))
            })
            .sum()
    }
}

/// The link `g: R^r → R`.
#[derive(Clone, Debug, PartialEq)]
pub enum LinkFunction {
    /// `(z_1² + ½ z_2²)/√(5/2)`; unit variance.
    Quad2d,
    /// `h_4(z_1) + h_4(z_2)`.
    Hermite4Sum,
    /// `h_k(z_1)`, `k ≥ 1`.
    HermiteSingle(u32),
    Polynomial(SparsePoly),
}

const LINK_CHECK_SAMPLES: usize = 4096;
const LINK_CHECK_SEED: u64 = 0x11_4b;

impl LinkFunction {
    pub fn hermite_single(k: u32) -> Result<Self> {
        if k == 0 {
            return Err(Error::param("k", "link degree must be at least 1"));
        }
        Ok(LinkFunction::HermiteSingle(k))
    }

    /// Validates a polynomial link: degree at least one, finite at the origin and
    /// with a finite Monte-Carlo second moment.
    pub fn polynomial(poly: SparsePoly) -> Result<Self> {
        let link = LinkFunction::Polynomial(poly);
        link.validate()?;
        Ok(link)
    }

    pub fn validate(&self) -> Result<()> {
        if self.degree() == 0 {
            return Err(Error::param("link", "degree must be at least 1"));
        }
        let r = self.arity();
        let origin = alloc::vec![0.0; r];
        if !self.eval(&origin).is_finite() {
            return Err(Error::param("link", "not finite at the origin"));
        }
        let mut g = rng::seeded(LINK_CHECK_SEED);
        let mut z = alloc::vec![0.0; r];
        let mut acc = 0.0;
        for _ in 0..LINK_CHECK_SAMPLES {
            rng::fill_standard_normal(&mut g, &mut z);
            let v = self.eval(&z);
            acc += v * v;
        }
        if !(acc / LINK_CHECK_SAMPLES as f64).is_finite() {
            return Err(Error::param("link", "second moment is not finite"));
        }
        Ok(())
    }

    pub fn arity(&self) -> usize {
        match self {
            LinkFunction::Quad2d | LinkFunction::Hermite4Sum => 2,
            LinkFunction::HermiteSingle(_) => 1,
            LinkFunction::Polynomial(p) => p.arity(),
        }
    }

    pub fn degree(&self) -> u32 {
        match self {
            LinkFunction::Quad2d => 2,
            LinkFunction::Hermite4Sum => 4,
            LinkFunction::HermiteSingle(k) => *k,
            LinkFunction::Polynomial(p) => p.degree(),
        }
    }

    pub fn eval(&self, z: &[f64]) -> f64 {
        match self {
            LinkFunction::Quad2d => (z[0] * z[0] + 0.5 * z[1] * z[1]) / 2.5f64.sqrt(),
            LinkFunction::Hermite4Sum => hermite_poly(4, z[0]) + hermite_poly(4, z[1]),
            LinkFunction::HermiteSingle(k) => hermite_poly(*k, z[0]),
            LinkFunction::Polynomial(p) => p.eval(z),
        }
    }

    /// Closed-form `E[g(z)²]` for the built-in links.
    pub fn second_moment(&self) -> Option<f64> {
        match self {
            // E[(z1² + z2²/2)²] = 3 + 1 + 3/4.
            LinkFunction::Quad2d => Some(4.75 / 2.5),
            LinkFunction::Hermite4Sum => Some(2.0),
            LinkFunction::HermiteSingle(_) => Some(1.0),
            LinkFunction::Polynomial(_) => None,
        }
    }

    /// Closed-form `E[g(z)]` for the built-in links.
    pub fn mean(&self) -> Option<f64> {
        match self {
            LinkFunction::Quad2d => Some(1.5 / 2.5f64.sqrt()),
            LinkFunction::Hermite4Sum | LinkFunction::HermiteSingle(_) => Some(0.0),
            LinkFunction::Polynomial(_) => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            LinkFunction::Quad2d => "quad2d",
            LinkFunction::Hermite4Sum => "hermite4sum",
            LinkFunction::HermiteSingle(_) => "hermite_single",
            LinkFunction::Polynomial(_) => "polynomial",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MultiIndexTarget {
    subspace: HiddenSubspace,
    link: LinkFunction,
}

impl MultiIndexTarget {
    pub fn new(subspace: HiddenSubspace, link: LinkFunction) -> Result<Self> {
        if link.arity() != subspace.r() {
            return Err(Error::dim(format!(
                "link takes {} inputs but the subspace has r={}",
                link.arity(),
                subspace.r()
            )));
        }
        Ok(MultiIndexTarget { subspace, link })
    }

    /// The built-in link on the first `arity` coordinate axes of `R^d`.
    pub fn axis_aligned(d: usize, link: LinkFunction) -> Result<Self> {
        let r = link.arity();
        Self::new(HiddenSubspace::axis_aligned(d, r)?, link)
    }

    pub fn subspace(&self) -> &HiddenSubspace {
        &self.subspace
    }

    pub fn link(&self) -> &LinkFunction {
        &self.link
    }

    pub fn d(&self) -> usize {
        self.subspace.d()
    }

    pub fn r(&self) -> usize {
        self.subspace.r()
    }

    /// `g(Ux)`.
    pub fn eval(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.d());
        let mut z = [0.0f64; 8];
        if self.r() <= z.len() {
            let z = &mut z[..self.r()];
            self.subspace.project_into(x, z);
            self.link.eval(z)
        } else {
            let mut z = alloc::vec![0.0; self.r()];
            self.subspace.project_into(x, &mut z);
            self.link.eval(&z)
        }
    }

    /// Fallible variant of [`eval`](Self::eval) that checks the input length.
    pub fn try_eval(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.d() {
            return Err(Error::dim(format!(
                "input of length {} for d={}",
                x.len(),
                self.d()
            )));
        }
        Ok(self.eval(x))
    }
}

/// `n` i.i.d. pairs `(x_i, f*(x_i))` with `x_i ~ N(0, I_d)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub x: Matrix,
    pub y: Vec<f64>,
    pub seed: u64,
}

impl Dataset {
    pub fn new(x: Matrix, y: Vec<f64>, seed: u64) -> Result<Self> {
        if x.rows() != y.len() {
            return Err(Error::dim(format!(
                "{} inputs but {} labels",
                x.rows(),
                y.len()
            )));
        }
        Ok(Dataset { x, y, seed })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn d(&self) -> usize {
        self.x.cols()
    }

    /// Copy with every label shifted by `-shift`.
    pub fn with_shifted_labels(&self, shift: f64) -> Dataset {
        Dataset {
            x: self.x.clone(),
            y: self.y.iter().map(|y| y - shift).collect(),
            seed: self.seed,
        }
    }
}

pub fn generate_dataset(target: &MultiIndexTarget, n: usize, seed: u64) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::param("n", "dataset needs at least one sample"));
    }
    let d = target.d();
    let mut g = rng::seeded(seed);
    let mut x = Matrix::zeros(n, d);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let row = x.row_mut(i);
        rng::fill_standard_normal(&mut g, row);
        y.push(target.eval(row));
    }
    Dataset::new(x, y, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn hermite_reference_values() {
        assert_eq!(hermite_poly(0, 7.3), 1.0);
        assert_eq!(hermite_poly(1, -0.4), -0.4);
        assert!(close(hermite_poly(2, 0.0), -1.0 / 2f64.sqrt(), 1e-15));
        assert!(close(hermite_poly(4, 0.0), 3.0 / 24f64.sqrt(), 1e-15));
        // h_4(z) = (z⁴ − 6z² + 3)/√24 at z = 1.7
        let z: f64 = 1.7;
        let want = (z.powi(4) - 6.0 * z * z + 3.0) / 24f64.sqrt();
        assert!(close(hermite_poly(4, z), want, 1e-14));
    }

    #[test]
    fn subspace_modes() {
        let u = HiddenSubspace::axis_aligned(4, 2).unwrap();
        assert_eq!(u.direction(0), &[1.0, 0.0, 0.0, 0.0]);
        assert_eq!(u.direction(1), &[0.0, 1.0, 0.0, 0.0]);

        let u = HiddenSubspace::new(30, 5, SubspaceMode::Random { seed: 9 }).unwrap();
        assert!(u.orthonormality_error() <= 1e-12);

        let u = HiddenSubspace::new(3, 3, SubspaceMode::Random { seed: 1 }).unwrap();
        let ut = u.basis().transpose();
        let g = ut.gram_rows();
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!(close(g.get(i, j), want, 1e-12));
            }
        }

        assert!(matches!(
            HiddenSubspace::axis_aligned(2, 3),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn target_values() {
        let t = MultiIndexTarget::axis_aligned(5, LinkFunction::Quad2d).unwrap();
        let x = [1.0, 1.0, 0.0, 0.0, 0.0];
        assert!(close(t.eval(&x), 1.5 / 2.5f64.sqrt(), 1e-15));
        assert_eq!(t.eval(&[0.0; 5]), 0.0);

        let t = MultiIndexTarget::axis_aligned(5, LinkFunction::Hermite4Sum).unwrap();
        assert!(close(t.eval(&[0.0; 5]), 6.0 / 24f64.sqrt(), 1e-15));
        assert!(t.try_eval(&[0.0; 4]).is_err());
    }

    #[test]
    fn link_validation() {
        assert!(LinkFunction::hermite_single(0).is_err());
        let constant = SparsePoly::new(
            1,
            alloc::vec![Monomial {
                exponents: alloc::vec![0],
                coeff: 2.0
            }],
        )
        .unwrap();
        assert!(LinkFunction::polynomial(constant).is_err());
        let cubic = SparsePoly::new(
            2,
            alloc::vec![
                Monomial {
                    exponents: alloc::vec![3, 0],
                    coeff: 1.0
                },
                Monomial {
                    exponents: alloc::vec![1, 1],
                    coeff: -2.0
                },
            ],
        )
        .unwrap();
        let link = LinkFunction::polynomial(cubic).unwrap();
        assert_eq!(link.degree(), 3);
        assert!(close(link.eval(&[2.0, 0.5]), 8.0 - 2.0, 1e-15));
        let u = HiddenSubspace::axis_aligned(3, 1).unwrap();
        assert!(MultiIndexTarget::new(u, link).is_err());
    }

    #[test]
    fn dataset_is_deterministic() {
        let t = MultiIndexTarget::axis_aligned(6, LinkFunction::Quad2d).unwrap();
        let a = generate_dataset(&t, 1, 5).unwrap();
        let b = generate_dataset(&t, 1, 5).unwrap();
        assert_eq!(a, b);
        assert!(generate_dataset(&t, 0, 5).is_err());
    }

    #[test]
    fn permuting_orthogonal_coordinates_is_invisible() {
        let t = MultiIndexTarget::axis_aligned(6, LinkFunction::Hermite4Sum).unwrap();
        let x = [0.3, -1.2, 0.7, 2.0, -0.5, 1.1];
        let mut p = x;
        p.swap(2, 5);
        p.swap(3, 4);
        assert_eq!(t.eval(&x).to_bits(), t.eval(&p).to_bits());
    }
}
