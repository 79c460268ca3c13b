//! Summary statistics shared by every aggregation in the crate.

use alloc::vec::Vec;
#[allow(unused_imports)] // shadowed by std float methods when std is linked
use num_traits::Float;

use crate::error::{Error, Result};

pub fn mean(xs: &[f64]) -> Result<f64> {
    if xs.is_empty() {
        return Err(Error::UndefinedMetric("mean of an empty sample".into()));
    }
    Ok(xs.iter().sum::<f64>() / xs.len() as f64)
}

fn sorted(xs: &[f64]) -> Result<Vec<f64>> {
    if xs.is_empty() {
        return Err(Error::UndefinedMetric("quantile of an empty sample".into()));
    }
    if xs.iter().any(|x| x.is_nan()) {
        return Err(Error::UndefinedMetric("quantile of a sample with NaN".into()));
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(v)
}

/// `q`-th percentile (`q ∈ [0, 100]`) with linear interpolation between order
/// statistics at positions `(n − 1)·q/100`.
pub fn percentile(xs: &[f64], q: f64) -> Result<f64> {
    if !(0.0..=100.0).contains(&q) {
        return Err(Error::param("q", alloc::format!("percentile {q} outside [0, 100]")));
    }
    let v = sorted(xs)?;
    Ok(interpolate(&v, q))
}

fn interpolate(v: &[f64], q: f64) -> f64 {
    let pos = (v.len() - 1) as f64 * q / 100.0;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    if lo == hi {
        v[lo]
    } else {
        v[lo] + (v[hi] - v[lo]) * frac
    }
}

pub fn median(xs: &[f64]) -> Result<f64> {
    percentile(xs, 50.0)
}

/// Several percentiles from one sort.
pub fn percentiles(xs: &[f64], qs: &[f64]) -> Result<Vec<f64>> {
    let v = sorted(xs)?;
    qs.iter()
        .map(|&q| {
            if (0.0..=100.0).contains(&q) {
                Ok(interpolate(&v, q))
            } else {
                Err(Error::param("q", alloc::format!("percentile {q} outside [0, 100]")))
            }
        })
        .collect()
}

/// Least-squares slope of `y` against `x`.
pub fn ols_slope(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::dim("slope needs two or more paired points"));
    }
    let mx = mean(x)?;
    let my = mean(y)?;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::UndefinedMetric("slope with constant x".into()));
    }
    Ok(sxy / sxx)
}
