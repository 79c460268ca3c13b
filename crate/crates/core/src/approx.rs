//! Exact reproduction of monomials by the locally quadratic activation.
//!
//! For every `k` there is a bounded weight `v_k(a, b)` on `a ∈ {±1}`,
//! `b ∈ [−3, 3]` with `E_{a,b}[v_k(a, b) σ(az + b)] = z^k` for all `|z| ≤ 1`,
//! where `a` is a uniform sign, `b ~ Unif[−3, 3]` and `σ` is locally quadratic.
//! The weights are built from four pieces:
//!
//! - `v₀ = 12·(b − 5/2)` on `a = 1, b ∈ [2, 3]` reproduces the constant 1,
//! - `v₁ = −24b + 61` on `a = 1, b ∈ [2, 3]` reproduces `z`,
//! - `v₂ = 1` on `a = 1, b ∈ [−2, 2]`, minus `(7/3)·v₀`, reproduces `z²`,
//! - the Taylor kernel `−½k(k−1)(k−2)(1−b)^{k−3}` on `b ∈ [0, 1]`, whose
//!   integral against `σ(±z + b)` equals `z^k` up to terms in `1, z, z²`.
//!
//! All of the above are divided by the uniform density `1/6`.

use alloc::vec::Vec;
#[allow(unused_imports)] // shadowed by std float methods when std is linked
use num_traits::Float;

use crate::error::{Error, Result};
use crate::network::Activation;
use crate::quadrature::{gauss_legendre, Rule};

const DENSITY: f64 = 1.0 / 6.0;
const B_MIN: f64 = -3.0;
const B_MAX: f64 = 3.0;
/// Points where some `v_k` may jump.
const SUPPORT_BREAKS: [f64; 6] = [-3.0, -2.0, 0.0, 1.0, 2.0, 3.0];

/// The weight `v_k` for one degree `k`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct WeightFunction {
    k: u32,
}

pub fn build_weight_fn(k: u32) -> WeightFunction {
    WeightFunction { k }
}

fn in_closed(b: f64, lo: f64, hi: f64) -> bool {
    (lo..=hi).contains(&b)
}

/// `v₀·μ`
fn constant_piece(a: f64, b: f64) -> f64 {
    if a == 1.0 && in_closed(b, 2.0, 3.0) {
        12.0 * (b - 2.5)
    } else {
        0.0
    }
}

/// `v₁·μ`
fn linear_piece(a: f64, b: f64) -> f64 {
    if a == 1.0 && in_closed(b, 2.0, 3.0) {
        -24.0 * b + 61.0
    } else {
        0.0
    }
}

/// `v₂·μ`
fn quadratic_piece(a: f64, b: f64) -> f64 {
    let plateau = if a == 1.0 && in_closed(b, -2.0, 2.0) {
        1.0
    } else {
        0.0
    };
    plateau - 7.0 / 3.0 * constant_piece(a, b)
}

/// Taylor-remainder kernel times `μ`, for `k ≥ 3`.
fn kernel_piece(k: u32, b: f64) -> f64 {
    if !in_closed(b, 0.0, 1.0) {
        return 0.0;
    }
    let kf = k as f64;
    -0.5 * kf * (kf - 1.0) * (kf - 2.0) * (1.0 - b).powi(k as i32 - 3)
}

impl WeightFunction {
    pub fn k(&self) -> u32 {
        self.k
    }

    /// `v_k(a, b)·μ(b)`: the weight against `db` rather than the uniform law.
    fn density_weighted(&self, a: f64, b: f64) -> f64 {
        let k = self.k;
        match k {
            0 => constant_piece(a, b),
            1 => linear_piece(a, b),
            2 => quadratic_piece(a, b),
            _ => {
                let kf = k as f64;
                if k % 2 == 0 {
                    2.0 * kernel_piece(k, b)
                        + kf * (kf - 1.0) * quadratic_piece(a, b)
                        + 2.0 * constant_piece(a, b)
                } else {
                    2.0 * a * kernel_piece(k, b) + 2.0 * kf * linear_piece(a, b)
                }
            }
        }
    }

    /// `v_k(a, b)`; zero for `a ∉ {±1}` or `b` outside the support.
    pub fn eval(&self, a: f64, b: f64) -> f64 {
        if (a != 1.0 && a != -1.0) || !in_closed(b, B_MIN, B_MAX) {
            return 0.0;
        }
        self.density_weighted(a, b) / DENSITY
    }

    /// Interval of `b` outside which `v_k` vanishes for both signs.
    pub fn support(&self) -> (f64, f64) {
        match self.k {
            0 | 1 => (2.0, 3.0),
            2 => (-2.0, 3.0),
            k if k % 2 == 1 => (0.0, 3.0),
            _ => (-2.0, 3.0),
        }
    }

    /// `sup |v_k|`, scanned on a fine grid of `b` that includes every breakpoint.
    pub fn sup_norm(&self) -> f64 {
        let mut best = 0.0f64;
        let mut probe = |b: f64| {
            for a in [1.0, -1.0] {
                best = best.max(self.eval(a, b).abs());
            }
        };
        let steps = 6000;
        for i in 0..=steps {
            probe(B_MIN + (B_MAX - B_MIN) * i as f64 / steps as f64);
        }
        for &b in &SUPPORT_BREAKS {
            probe(b);
        }
        best
    }

    /// `E_{a,b}[v_k(a, b) σ(az + b)]` with `σ` locally quadratic, integrating each
    /// smooth piece in `b` with `rule`.
    pub fn expectation(&self, z: f64, rule: &Rule) -> f64 {
        let act = Activation::LocallyQuadratic;
        let mut total = 0.0;
        for a in [1.0, -1.0] {
            let mut cuts: Vec<f64> = SUPPORT_BREAKS.to_vec();
            for kink in [1.0 - a * z, -1.0 - a * z] {
                if kink > B_MIN && kink < B_MAX {
                    cuts.push(kink);
                }
            }
            cuts.sort_by(f64::total_cmp);
            cuts.dedup();
            for w in cuts.windows(2) {
                let (lo, hi) = (w[0], w[1]);
                if hi - lo <= 0.0 {
                    continue;
                }
                // Evaluate the weight at interior points only, so the closed
                // indicator boundaries never double count.
                total += rule.integrate(lo, hi, |b| {
                    self.density_weighted(a, b) * act.eval(a * z + b)
                });
            }
        }
        0.5 * total
    }
}

/// `n` evenly spaced points on `[−1, 1]`.
pub fn uniform_grid(n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => alloc::vec![0.0],
        _ => (0..n)
            .map(|i| -1.0 + 2.0 * i as f64 / (n - 1) as f64)
            .collect(),
    }
}

/// `max_z |E[v_k σ(az + b)] − z^k|` over the grid.
pub fn monomial_error(k: u32, z_grid: &[f64], quad_order: usize) -> Result<f64> {
    if quad_order < 4 {
        return Err(Error::param(
            "quad_order",
            alloc::format!("must be at least 4, got {quad_order}"),
        ));
    }
    if let Some(z) = z_grid.iter().find(|z| !(z.abs() <= 1.0)) {
        return Err(Error::param(
            "z_grid",
            alloc::format!("point {z} lies outside [-1, 1]"),
        ));
    }
    let rule = gauss_legendre(quad_order)?;
    let v = build_weight_fn(k);
    Ok(z_grid
        .iter()
        .map(|&z| (v.expectation(z, &rule) - z.powi(k as i32)).abs())
        .fold(0.0, f64::max))
}
