//! Orthogonal periodic discrete wavelet transform with the Symmlet-8 filter.
//!
//! The filter is the 16-tap least-asymmetric Daubechies low-pass with eight
//! vanishing moments, unit l2 norm and sum sqrt(2). The high-pass is the
//! quadrature mirror `g[k] = (-1)^k h[15-k]`. Periodic (circular) boundary
//! handling keeps the transform exactly orthogonal at every dyadic length,
//! so Parseval and perfect reconstruction hold to rounding error.

use thiserror::Error;

/// Symmlet-8 low-pass decomposition filter.
pub const SYMMLET8: [f64; 16] = [
    -0.003_382_415_951_006_125_6,
    -0.000_542_132_331_791_148_1,
    0.031_695_087_811_492_981,
    0.007_607_487_324_917_605_4,
    -0.143_294_238_350_809_71,
    -0.061_273_359_067_658_524,
    0.481_359_651_258_372_21,
    0.777_185_751_700_523_51,
    0.364_441_894_835_338_93,
    -0.051_945_838_107_709_037,
    -0.027_219_029_917_056_003,
    0.049_137_179_673_607_506,
    0.003_808_752_013_890_615_1,
    -0.014_952_258_337_048_231,
    -0.000_302_920_514_724_133_08,
    0.001_889_950_332_759_460_9,
];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WaveletError {
    #[error("signal length must be a power of two, got {0}")]
    BadLength(usize),
    #[error("levels must lie in 1..={max}, got {requested}")]
    BadLevels { requested: usize, max: usize },
}

/// Deepest admissible level: keeps the coarsest band at least 8 long.
pub fn max_levels(len: usize) -> usize {
    (len.trailing_zeros() as usize).saturating_sub(3)
}

/// Default decomposition depth: coarsest band of length 16, matching the
/// usual `floor(log2(len / (taps - 1)))` rule for a 16-tap filter.
pub fn default_levels(len: usize) -> usize {
    (len.trailing_zeros() as usize).saturating_sub(4).max(1)
}

fn high_pass(k: usize) -> f64 {
    let h = SYMMLET8[15 - k];
    if k % 2 == 0 {
        h
    } else {
        -h
    }
}

fn check(len: usize, levels: usize) -> Result<(), WaveletError> {
    if len < 2 || !len.is_power_of_two() {
        return Err(WaveletError::BadLength(len));
    }
    let max = max_levels(len);
    if levels == 0 || levels > max {
        return Err(WaveletError::BadLevels {
            requested: levels,
            max,
        });
    }
    Ok(())
}

/// Forward transform. Output layout: `[approx_L | detail_L | ... | detail_1]`,
/// same length as the input.
pub fn dwt_symmlet8(v: &[f64], levels: usize) -> Result<Vec<f64>, WaveletError> {
    check(v.len(), levels)?;
    let mut out = v.to_vec();
    let mut active = v.len();
    for _ in 0..levels {
        let half = active / 2;
        let band = out[..active].to_vec();
        for k in 0..half {
            let mut a = 0.0;
            let mut d = 0.0;
            for (m, &h) in SYMMLET8.iter().enumerate() {
                let s = band[(2 * k + m) % active];
                a += h * s;
                d += high_pass(m) * s;
            }
            out[k] = a;
            out[half + k] = d;
        }
        active = half;
    }
    Ok(out)
}

/// Inverse transform; exact inverse of [`dwt_symmlet8`] at the same depth.
pub fn idwt_symmlet8(coeffs: &[f64], levels: usize) -> Result<Vec<f64>, WaveletError> {
    check(coeffs.len(), levels)?;
    let mut out = coeffs.to_vec();
    let mut active = coeffs.len() >> levels;
    for _ in 0..levels {
        let full = active * 2;
        let mut band = vec![0.0; full];
        for k in 0..active {
            let a = out[k];
            let d = out[active + k];
            for (m, &h) in SYMMLET8.iter().enumerate() {
                band[(2 * k + m) % full] += h * a + high_pass(m) * d;
            }
        }
        out[..full].copy_from_slice(&band);
        active = full;
    }
    Ok(out)
}
