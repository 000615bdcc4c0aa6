//! Robust location/scale estimators and the Huber function.

use thiserror::Error;

use crate::matrix::DenseMatrix;

/// Normal-consistency factor: 1.4826 * MAD estimates the standard deviation
/// under Gaussian data. Applied by callers exactly where a formula calls for
/// it; `mad` itself is unscaled.
pub const MAD_NORMAL_FACTOR: f64 = 1.4826;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RobustError {
    #[error("input must be nonempty")]
    EmptyInput,
}

/// Estimated noise standard deviation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseScale {
    sigma_hat: f64,
}

impl NoiseScale {
    pub fn new(sigma_hat: f64) -> Self {
        assert!(
            sigma_hat >= 0.0 && sigma_hat.is_finite(),
            "sigma must be finite and nonnegative"
        );
        Self { sigma_hat }
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sigma_hat
    }
}

/// Median of `v`; mean of the two central order statistics for even lengths.
pub fn median(v: &[f64]) -> Result<f64, RobustError> {
    if v.is_empty() {
        return Err(RobustError::EmptyInput);
    }
    let mut buf = v.to_vec();
    Ok(median_inplace(&mut buf))
}

fn median_inplace(buf: &mut [f64]) -> f64 {
    let n = buf.len();
    let mid = n / 2;
    buf.select_nth_unstable_by(mid, |a, b| a.partial_cmp(b).expect("finite values"));
    let upper = buf[mid];
    if n % 2 == 1 {
        upper
    } else {
        let lower = buf[..mid]
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lower + upper)
    }
}

/// Median absolute deviation from the median, without the 1.4826 factor.
pub fn mad(v: &[f64]) -> Result<f64, RobustError> {
    if v.is_empty() {
        return Err(RobustError::EmptyInput);
    }
    let mut buf = v.to_vec();
    let med = median_inplace(&mut buf);
    for x in &mut buf {
        *x = (*x - med).abs();
    }
    Ok(median_inplace(&mut buf))
}

/// `1.4826 * MAD` over all entries of `x`, flattened.
pub fn estimate_sigma(x: &DenseMatrix) -> NoiseScale {
    let m = mad(x.as_slice()).expect("DenseMatrix is nonempty by construction");
    NoiseScale::new(MAD_NORMAL_FACTOR * m)
}

/// Huber rho: `x^2` on `|x| <= delta`, `2*delta*|x| - delta^2` beyond.
#[inline]
pub fn huber_rho(x: f64, delta: f64) -> f64 {
    debug_assert!(delta >= 0.0);
    let ax = x.abs();
    if ax <= delta {
        x * x
    } else {
        2.0 * delta * ax - delta * delta
    }
}

/// Type-7 quantile (linear interpolation between order statistics) of the
/// absolute values of the entries of `x`.
pub fn abs_quantile(x: &DenseMatrix, beta: f64) -> f64 {
    assert!(beta > 0.0 && beta < 1.0, "beta must lie in (0,1)");
    let mut abs: Vec<f64> = x.as_slice().iter().map(|v| v.abs()).collect();
    abs.sort_unstable_by(|a, b| a.partial_cmp(b).expect("finite values"));
    let n = abs.len();
    let h = beta * (n as f64 - 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    let frac = h - lo as f64;
    abs[lo] + frac * (abs[hi] - abs[lo])
}
