//! Two-layer network `f(x) = Σ_j a_j σ(w_jᵀx + b_j)`, its initializations and
//! analytic gradients.

use alloc::format;
use alloc::vec::Vec;
#[allow(unused_imports)] // shadowed by std float methods when std is linked
use num_traits::Float;
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{axpy, dot, norm, Matrix};
use crate::losses::LossFunction;
use crate::rng::{self, SeededRng};
use crate::targets::Dataset;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Activation {
    /// `t²` on `|t| < 1`, `2|t| − 1` outside.
    LocallyQuadratic,
    /// `t²`
    Quadratic,
    /// `cos t`
    Cosine,
    /// `t²/2 + t³/6`: `σ'(0) = 0`, `σ''(0) = 1`, constant third derivative 1.
    CubedSmooth,
}

/// Local facts about an activation at the origin.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ActivationInfo {
    pub d1_at_zero: f64,
    pub d2_at_zero: f64,
    /// Bound on `|σ'''|` (almost everywhere for the piecewise kinds).
    pub third_derivative_bound: f64,
    /// Exponent of the monomial approximation property, where known.
    pub monomial_exponent: Option<f64>,
    /// `σ'(0) = 0` and `σ''(0) = 1`.
    pub normalized: bool,
}

impl Activation {
    pub const ALL: [Activation; 4] = [
        Activation::LocallyQuadratic,
        Activation::Quadratic,
        Activation::Cosine,
        Activation::CubedSmooth,
    ];

    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "locally_quadratic" => Ok(Activation::LocallyQuadratic),
            "quadratic" => Ok(Activation::Quadratic),
            "cosine" => Ok(Activation::Cosine),
            "cubed_smooth" => Ok(Activation::CubedSmooth),
            other => Err(Error::param(
                "activation",
                format!("unknown activation `{other}`"),
            )),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Activation::LocallyQuadratic => "locally_quadratic",
            Activation::Quadratic => "quadratic",
            Activation::Cosine => "cosine",
            Activation::CubedSmooth => "cubed_smooth",
        }
    }

    #[inline]
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            Activation::LocallyQuadratic => {
                let a = t.abs();
                if a < 1.0 {
                    t * t
                } else {
                    2.0 * a - 1.0
                }
            }
            Activation::Quadratic => t * t,
            Activation::Cosine => t.cos(),
            Activation::CubedSmooth => t * t * (0.5 + t / 6.0),
        }
    }

    #[inline]
    pub fn d1(&self, t: f64) -> f64 {
        match self {
            Activation::LocallyQuadratic => {
                if t.abs() < 1.0 {
                    2.0 * t
                } else if t > 0.0 {
                    2.0
                } else {
                    -2.0
                }
            }
            Activation::Quadratic => 2.0 * t,
            Activation::Cosine => -t.sin(),
            Activation::CubedSmooth => t * (1.0 + 0.5 * t),
        }
    }

    pub fn d2(&self, t: f64) -> f64 {
        match self {
            Activation::LocallyQuadratic => {
                if t.abs() < 1.0 {
                    2.0
                } else {
                    0.0
                }
            }
            Activation::Quadratic => 2.0,
            Activation::Cosine => -t.cos(),
            Activation::CubedSmooth => 1.0 + t,
        }
    }

    pub fn info(&self) -> ActivationInfo {
        let (third, beta) = match self {
            Activation::LocallyQuadratic => (2.0, Some(0.0)),
            Activation::Quadratic => (0.0, None),
            Activation::Cosine => (1.0, None),
            Activation::CubedSmooth => (1.0, None),
        };
        let d1 = self.d1(0.0);
        let d2 = self.d2(0.0);
        ActivationInfo {
            d1_at_zero: d1,
            d2_at_zero: d2,
            third_derivative_bound: third,
            monomial_exponent: beta,
            normalized: d1.abs() <= 1e-10 && (d2 - 1.0).abs() <= 1e-10,
        }
    }
}

/// Index of the mirrored partner of neuron `j` under symmetric initialization.
#[inline]
pub fn pair(j: usize, m: usize) -> usize {
    m - 1 - j
}

#[derive(Clone, Debug, PartialEq)]
pub struct NetworkParams {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub w: Matrix,
}

impl NetworkParams {
    pub fn new(a: Vec<f64>, b: Vec<f64>, w: Matrix) -> Result<Self> {
        if a.is_empty() || a.len() != b.len() || a.len() != w.rows() {
            return Err(Error::dim(format!(
                "a has {}, b has {}, W has {} rows",
                a.len(),
                b.len(),
                w.rows()
            )));
        }
        Ok(NetworkParams { a, b, w })
    }

    pub fn m(&self) -> usize {
        self.a.len()
    }

    pub fn d(&self) -> usize {
        self.w.cols()
    }

    pub fn is_finite(&self) -> bool {
        self.w.is_finite()
            && self.a.iter().all(|v| v.is_finite())
            && self.b.iter().all(|v| v.is_finite())
    }

    pub fn max_row_norm(&self) -> f64 {
        self.w.row_iter().map(norm).fold(0.0, f64::max)
    }

    /// Network output; paired neurons `j` and `m−1−j` are summed first so that a
    /// symmetric initialization evaluates to exactly zero.
    pub fn forward(&self, act: Activation, x: &[f64]) -> f64 {
        let m = self.m();
        let mut pre = [0.0f64; 16];
        if m <= pre.len() {
            for j in 0..m {
                pre[j] = dot(self.w.row(j), x) + self.b[j];
            }
            self.combine(act, &pre[..m])
        } else {
            let pre: Vec<f64> = (0..m)
                .map(|j| dot(self.w.row(j), x) + self.b[j])
                .collect();
            self.combine(act, &pre)
        }
    }

    pub fn try_forward(&self, act: Activation, x: &[f64]) -> Result<f64> {
        if x.len() != self.d() {
            return Err(Error::dim(format!(
                "input of length {} for a network on R^{}",
                x.len(),
                self.d()
            )));
        }
        Ok(self.forward(act, x))
    }

    fn combine(&self, act: Activation, pre: &[f64]) -> f64 {
        let m = pre.len();
        let mut s = 0.0;
        for j in 0..m / 2 {
            let k = pair(j, m);
            s += self.a[j] * act.eval(pre[j]) + self.a[k] * act.eval(pre[k]);
        }
        if m % 2 == 1 {
            let c = m / 2;
            s += self.a[c] * act.eval(pre[c]);
        }
        s
    }
}

/// Symmetric initialization: the first half of the neurons get Rademacher `a_j` and
/// `w_j` uniform on the sphere of radius `eps0`; neuron `m−1−j` mirrors neuron `j`
/// with `a` negated. Biases are zero.
pub fn init_symmetric(m: usize, d: usize, eps0: f64, seed: u64) -> Result<NetworkParams> {
    if m == 0 || m % 2 != 0 {
        return Err(Error::param("m", format!("must be a positive even count, got {m}")));
    }
    if d == 0 {
        return Err(Error::param("d", "must be positive"));
    }
    if !(eps0 > 0.0 && eps0.is_finite()) {
        return Err(Error::param("eps0", format!("must be positive, got {eps0}")));
    }
    let mut g = rng::seeded(seed);
    let mut a = alloc::vec![0.0; m];
    let mut w = Matrix::zeros(m, d);
    for j in 0..m / 2 {
        a[j] = rng::rademacher(&mut g);
        let dir = random_unit(&mut g, d);
        for (dst, v) in w.row_mut(j).iter_mut().zip(&dir) {
            *dst = v * eps0;
        }
    }
    for j in 0..m / 2 {
        let k = pair(j, m);
        a[k] = -a[j];
        let row = w.row(j).to_vec();
        w.row_mut(k).copy_from_slice(&row);
    }
    NetworkParams::new(a, alloc::vec![0.0; m], w)
}

fn random_unit(g: &mut SeededRng, d: usize) -> Vec<f64> {
    loop {
        let mut v = rng::gaussian_vec(g, d);
        let r = norm(&v);
        if r > 0.0 && r.is_finite() {
            for x in &mut v {
                *x /= r;
            }
            return v;
        }
    }
}

/// Kaiming-uniform initialization: every entry uniform on `±√(6 / fan_in)`, with
/// fan-in `d` for `W` and `b` and `m` for `a`.
pub fn init_kaiming(m: usize, d: usize, seed: u64) -> Result<NetworkParams> {
    if m == 0 || d == 0 {
        return Err(Error::param("m", "width and dimension must be positive"));
    }
    let mut g = rng::seeded(seed);
    let bound_w = (6.0 / d as f64).sqrt();
    let bound_a = (6.0 / m as f64).sqrt();
    let mut w = Matrix::zeros(m, d);
    for v in w.as_mut_slice() {
        *v = g.random_range(-bound_w..bound_w);
    }
    let b = (0..m).map(|_| g.random_range(-bound_w..bound_w)).collect();
    let a = (0..m).map(|_| g.random_range(-bound_a..bound_a)).collect();
    NetworkParams::new(a, b, w)
}

/// A view of some rows of a dataset.
#[derive(Clone, Copy, Debug)]
pub struct Batch<'a> {
    x: &'a Matrix,
    y: &'a [f64],
    idx: Option<&'a [usize]>,
}

impl<'a> Batch<'a> {
    pub fn new(x: &'a Matrix, y: &'a [f64]) -> Result<Self> {
        if x.rows() != y.len() {
            return Err(Error::dim(format!("{} inputs, {} labels", x.rows(), y.len())));
        }
        if y.is_empty() {
            return Err(Error::param("batch", "must be nonempty"));
        }
        Ok(Batch { x, y, idx: None })
    }

    pub fn full(ds: &'a Dataset) -> Result<Self> {
        Self::new(&ds.x, &ds.y)
    }

    /// The rows listed in `idx`, in that order.
    pub fn subset(ds: &'a Dataset, idx: &'a [usize]) -> Result<Self> {
        if idx.is_empty() {
            return Err(Error::param("batch", "must be nonempty"));
        }
        if let Some(&bad) = idx.iter().find(|&&i| i >= ds.len()) {
            return Err(Error::dim(format!("row {bad} of a {}-row dataset", ds.len())));
        }
        Ok(Batch {
            x: &ds.x,
            y: &ds.y,
            idx: Some(idx),
        })
    }

    pub fn len(&self) -> usize {
        self.idx.map_or(self.y.len(), <[usize]>::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn d(&self) -> usize {
        self.x.cols()
    }

    #[inline]
    pub fn sample(&self, k: usize) -> (&'a [f64], f64) {
        let i = self.idx.map_or(k, |idx| idx[k]);
        (self.x.row(i), self.y[i])
    }
}

/// Mean-over-batch gradients of `(1/n) Σ_i ℓ(f(x_i), y_i)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub w: Matrix,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    /// Mean loss at the point where the gradient was taken.
    pub loss: f64,
}

impl Gradients {
    pub fn zeros(m: usize, d: usize) -> Self {
        Gradients {
            w: Matrix::zeros(m, d),
            a: alloc::vec![0.0; m],
            b: alloc::vec![0.0; m],
            loss: 0.0,
        }
    }

    fn reset(&mut self) {
        self.w.as_mut_slice().fill(0.0);
        self.a.fill(0.0);
        self.b.fill(0.0);
        self.loss = 0.0;
    }
}

/// Fills `out` with the gradients with respect to `W`, `a` and `b`.
///
/// Samples are accumulated in batch order, so the result does not depend on
/// anything but the inputs.
pub fn gradients_into(
    params: &NetworkParams,
    act: Activation,
    loss: &LossFunction,
    batch: &Batch<'_>,
    out: &mut Gradients,
) -> Result<()> {
    let (m, d) = (params.m(), params.d());
    if batch.d() != d {
        return Err(Error::dim(format!("batch in R^{} for a network on R^{d}", batch.d())));
    }
    if out.w.rows() != m || out.w.cols() != d || out.a.len() != m {
        *out = Gradients::zeros(m, d);
    } else {
        out.reset();
    }
    let mut pre = alloc::vec![0.0; m];
    let mut total_loss = 0.0;
    for k in 0..batch.len() {
        let (x, y) = batch.sample(k);
        for j in 0..m {
            pre[j] = dot(params.w.row(j), x) + params.b[j];
        }
        let f = params.combine(act, &pre);
        total_loss += loss.value(f, y);
        let g = loss.d1(f, y);
        if g == 0.0 {
            continue;
        }
        for j in 0..m {
            out.a[j] += g * act.eval(pre[j]);
            let c = g * params.a[j] * act.d1(pre[j]);
            out.b[j] += c;
            if c != 0.0 {
                axpy(c, x, out.w.row_mut(j));
            }
        }
    }
    let inv = 1.0 / batch.len() as f64;
    out.w.scale(inv);
    out.a.iter_mut().for_each(|v| *v *= inv);
    out.b.iter_mut().for_each(|v| *v *= inv);
    out.loss = total_loss * inv;
    Ok(())
}

pub fn gradients(
    params: &NetworkParams,
    act: Activation,
    loss: &LossFunction,
    batch: &Batch<'_>,
) -> Result<Gradients> {
    let mut out = Gradients::zeros(params.m(), params.d());
    gradients_into(params, act, loss, batch, &mut out)?;
    Ok(out)
}

pub fn grad_w(
    params: &NetworkParams,
    act: Activation,
    loss: &LossFunction,
    batch: &Batch<'_>,
) -> Result<Matrix> {
    Ok(gradients(params, act, loss, batch)?.w)
}

pub fn grad_a(
    params: &NetworkParams,
    act: Activation,
    loss: &LossFunction,
    batch: &Batch<'_>,
) -> Result<Vec<f64>> {
    Ok(gradients(params, act, loss, batch)?.a)
}

pub fn mean_loss(
    params: &NetworkParams,
    act: Activation,
    loss: &LossFunction,
    batch: &Batch<'_>,
) -> f64 {
    let mut s = 0.0;
    for k in 0..batch.len() {
        let (x, y) = batch.sample(k);
        s += loss.value(params.forward(act, x), y);
    }
    s / batch.len() as f64
}
