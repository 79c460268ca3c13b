//! Scalar losses `ℓ(t, y)` and the label transform `y ↦ ℓ'(0, y)`.

use alloc::format;
use alloc::vec::Vec;
#[allow(unused_imports)] // shadowed by std float methods when std is linked
use num_traits::Float;

use crate::error::{Error, Result};

pub const DEFAULT_HUBER_DELTA: f64 = 1.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LossFunction {
    /// `½(t − y)²`
    Square,
    /// Quadratic for `|t − y| ≤ δ`, linear beyond, C¹ at the seam.
    Huber { delta: f64 },
    /// `δ²(√(1 + ((t − y)/δ)²) − 1)`
    PseudoHuber { delta: f64 },
    /// `|t − y|`, with subgradient 0 at the kink.
    L1,
}

impl LossFunction {
    pub fn huber(delta: f64) -> Result<Self> {
        check_delta(delta)?;
        Ok(LossFunction::Huber { delta })
    }

    pub fn pseudo_huber(delta: f64) -> Result<Self> {
        check_delta(delta)?;
        Ok(LossFunction::PseudoHuber { delta })
    }

    /// Parses a config name; `delta` is used by the Huber family only.
    pub fn from_name(name: &str, delta: f64) -> Result<Self> {
        match name {
            "square" | "mse" => Ok(LossFunction::Square),
            "huber" => Self::huber(delta),
            "pseudo_huber" => Self::pseudo_huber(delta),
            "l1" => Ok(LossFunction::L1),
            other => Err(Error::param("loss", format!("unknown loss `{other}`"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            LossFunction::Square => "square",
            LossFunction::Huber { .. } => "huber",
            LossFunction::PseudoHuber { .. } => "pseudo_huber",
            LossFunction::L1 => "l1",
        }
    }

    pub fn delta(&self) -> Option<f64> {
        match *self {
            LossFunction::Huber { delta } | LossFunction::PseudoHuber { delta } => Some(delta),
            _ => None,
        }
    }

    pub fn value(&self, t: f64, y: f64) -> f64 {
        let r = t - y;
        match *self {
            LossFunction::Square => 0.5 * r * r,
            LossFunction::Huber { delta } => {
                let a = r.abs();
                if a <= delta {
                    0.5 * r * r
                } else {
                    delta * a - 0.5 * delta * delta
                }
            }
            LossFunction::PseudoHuber { delta } => {
                let q = r / delta;
                delta * delta * ((1.0 + q * q).sqrt() - 1.0)
            }
            LossFunction::L1 => r.abs(),
        }
    }

    /// `∂ℓ/∂t`.
    pub fn d1(&self, t: f64, y: f64) -> f64 {
        let r = t - y;
        match *self {
            LossFunction::Square => r,
            LossFunction::Huber { delta } => r.clamp(-delta, delta),
            LossFunction::PseudoHuber { delta } => {
                let q = r / delta;
                r / (1.0 + q * q).sqrt()
            }
            LossFunction::L1 => {
                if r > 0.0 {
                    1.0
                } else if r < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// Global bound on `|∂ℓ/∂t|`; `None` for the square loss, whose derivative
    /// only satisfies the linear-growth bound `|∂ℓ/∂t| ≤ |t| + |y|`.
    pub fn derivative_bound(&self) -> Option<f64> {
        match *self {
            LossFunction::Square => None,
            LossFunction::Huber { delta } | LossFunction::PseudoHuber { delta } => Some(delta),
            LossFunction::L1 => Some(1.0),
        }
    }

    /// Upper bound on `∂²ℓ/∂t²` (the L1 kink is treated as curvature 1, which is
    /// only used to size step lengths).
    pub fn curvature_bound(&self) -> f64 {
        1.0
    }
}

fn check_delta(delta: f64) -> Result<()> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::param(
            "loss_delta",
            format!("must be positive and finite, got {delta}"),
        ));
    }
    Ok(())
}

/// The preprocessing values `ℓ_i = ℓ'(0, y_i)` and their centered version.
#[derive(Clone, Debug, PartialEq)]
pub struct PreprocValues {
    pub raw: Vec<f64>,
    pub centered: Vec<f64>,
    pub centering_applied: bool,
}

impl PreprocValues {
    /// The values that enter `Σ̂_ℓ`: centered if centering was requested.
    pub fn values(&self) -> &[f64] {
        if self.centering_applied {
            &self.centered
        } else {
            &self.raw
        }
    }
}

pub fn preprocess(loss: &LossFunction, y: &[f64], center: bool) -> Result<PreprocValues> {
    if y.is_empty() {
        return Err(Error::param("y", "need at least one label"));
    }
    let raw: Vec<f64> = y.iter().map(|&yi| loss.d1(0.0, yi)).collect();
    let centered = if center {
        let mean = raw.iter().sum::<f64>() / raw.len() as f64;
        raw.iter().map(|v| v - mean).collect()
    } else {
        raw.clone()
    };
    Ok(PreprocValues {
        raw,
        centered,
        centering_applied: center,
    })
}

/// The label shift `c` solving `mean_i ℓ'(0, y_i − c) = 0`.
///
/// Training on `y − c` makes the preprocessing values mean-zero at the network's
/// zero initialization without touching the loss. For the square loss `c` is the
/// sample mean, for L1 a median, for Huber the Huber location estimate.
pub fn balancing_shift(loss: &LossFunction, y: &[f64]) -> Result<f64> {
    if y.is_empty() {
        return Err(Error::param("y", "need at least one label"));
    }
    if let LossFunction::Square = loss {
        return Ok(y.iter().sum::<f64>() / y.len() as f64);
    }
    let mean_d1 = |c: f64| y.iter().map(|&yi| loss.d1(0.0, yi - c)).sum::<f64>() / y.len() as f64;
    let (mut lo, mut hi) = y
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    // mean_d1 is non-decreasing in c: ≤ 0 at c = min(y), ≥ 0 at c = max(y).
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if mean_d1(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    // Pick the endpoint with the smaller residual.
    if mean_d1(lo).abs() <= mean_d1(hi).abs() {
        Ok(lo)
    } else {
        Ok(hi)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn all_losses() -> [LossFunction; 4] {
        [
            LossFunction::Square,
            LossFunction::huber(1.0).unwrap(),
            LossFunction::pseudo_huber(0.7).unwrap(),
            LossFunction::L1,
        ]
    }

    #[test]
    fn reference_values() {
        assert_eq!(LossFunction::Square.value(3.0, 1.0), 2.0);
        assert_eq!(LossFunction::huber(1.0).unwrap().value(3.0, 1.0), 1.5);
        for l in all_losses() {
            assert_eq!(l.value(-2.5, -2.5), 0.0);
            assert_eq!(l.value(4.0, 4.0), 0.0);
        }
    }

    #[test]
    fn derivative_values() {
        assert_eq!(LossFunction::Square.d1(0.0, 3.0), -3.0);
        assert_eq!(LossFunction::huber(1.0).unwrap().d1(0.0, 3.0), -1.0);
        let p = LossFunction::pseudo_huber(1.0).unwrap().d1(0.0, 3.0);
        assert!((p + 3.0 / 10f64.sqrt()).abs() < 1e-15);
        assert_eq!(LossFunction::L1.d1(2.0, 2.0), 0.0);
        assert_eq!(LossFunction::L1.d1(0.0, 2.0), -1.0);
    }

    #[test]
    fn bad_delta_is_rejected() {
        assert!(LossFunction::huber(0.0).is_err());
        assert!(LossFunction::pseudo_huber(-1.0).is_err());
        assert!(LossFunction::from_name("huber", f64::NAN).is_err());
        assert!(LossFunction::from_name("hinge", 1.0).is_err());
    }

    #[test]
    fn preprocess_examples() {
        let p = preprocess(&LossFunction::Square, &[1.0, 2.0, 3.0], false).unwrap();
        assert_eq!(p.raw, alloc::vec![-1.0, -2.0, -3.0]);
        assert_eq!(p.values(), &[-1.0, -2.0, -3.0]);
        let p = preprocess(&LossFunction::Square, &[1.0, 2.0, 3.0], true).unwrap();
        assert_eq!(p.centered, alloc::vec![1.0, 0.0, -1.0]);
        let h = LossFunction::huber(1.0).unwrap();
        let p = preprocess(&h, &[0.5, 5.0, -5.0], false).unwrap();
        assert_eq!(p.raw, alloc::vec![-0.5, -1.0, 1.0]);
        assert!(preprocess(&h, &[], true).is_err());
    }

    #[test]
    fn balancing_shift_zeroes_the_mean() {
        let y = [0.1, 3.0, -0.4, 0.2, 7.5, 0.0, -1.3];
        for l in all_losses() {
            let c = balancing_shift(&l, &y).unwrap();
            let shifted: Vec<f64> = y.iter().map(|v| v - c).collect();
            let p = preprocess(&l, &shifted, false).unwrap();
            let mean = p.raw.iter().sum::<f64>() / p.raw.len() as f64;
            // L1 has a step derivative; with an odd count the median zeroes it.
            assert!(mean.abs() < 1e-12, "{} mean {mean}", l.name());
        }
        let c = balancing_shift(&LossFunction::Square, &[1.0, 2.0, 6.0]).unwrap();
        assert_eq!(c, 3.0);
    }
}
