//! Entrywise thresholding functions and the data-driven selection of
//! per-column threshold levels.
//!
//! Threshold levels are calibrated to the expected maximum of noise projected
//! through the current frame, either by an m-out-of-n bootstrap over the
//! low-signal block of the data matrix or, when that block is too small, by
//! the Gaussian extreme-value asymptotic `sigma * sqrt(2 log n)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use rand::Rng;

use crate::frame::OrthonormalFrame;
use crate::matrix::DenseMatrix;
use crate::rng::StreamKey;
use crate::robust::{median, NoiseScale};

/// Canonical SCAD shape parameter (Fan & Li).
pub const SCAD_DEFAULT_A: f64 = 3.7;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ThresholdError {
    #[error("SCAD parameter must exceed 2, got {a}")]
    BadScadParameter { a: f64 },
    #[error("bootstrap branch selected but the low block is empty ({low_rows} rows x {low_cols} cols)")]
    EmptyLowBlock { low_rows: usize, low_cols: usize },
    #[error("previous frame has no nonzero rows; iteration has collapsed")]
    EmptyHighBlock,
    #[error("number of bootstrap replications must be at least 1")]
    BadBootCount,
    #[error("frame shapes do not conform to the data matrix")]
    DimensionMismatch,
}

/// Thresholding rule. All kinds satisfy `|eta(x, g) - x| <= g` and
/// `eta(x, g) = 0` whenever `|x| <= g`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ThresholdKind {
    /// Keep values above the level unchanged.
    Hard,
    /// Shrink surviving values by the level.
    Soft,
    /// Soft near the level, identity far above, linear interpolation between.
    Scad { a: f64 },
}

impl ThresholdKind {
    pub fn scad(a: f64) -> Result<Self, ThresholdError> {
        if !(a > 2.0) {
            return Err(ThresholdError::BadScadParameter { a });
        }
        Ok(ThresholdKind::Scad { a })
    }
}

impl Default for ThresholdKind {
    fn default() -> Self {
        ThresholdKind::Hard
    }
}

impl std::fmt::Display for ThresholdKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ThresholdKind::Hard => write!(f, "hard"),
            ThresholdKind::Soft => write!(f, "soft"),
            ThresholdKind::Scad { a } => write!(f, "scad(a={a})"),
        }
    }
}

/// Apply the thresholding rule at level `gamma >= 0`.
#[inline]
pub fn eta(x: f64, gamma: f64, kind: ThresholdKind) -> f64 {
    debug_assert!(gamma >= 0.0);
    let ax = x.abs();
    match kind {
        ThresholdKind::Hard => {
            if ax > gamma {
                x
            } else {
                0.0
            }
        }
        ThresholdKind::Soft => x.signum() * (ax - gamma).max(0.0),
        ThresholdKind::Scad { a } => {
            debug_assert!(a > 2.0);
            if ax <= 2.0 * gamma {
                x.signum() * (ax - gamma).max(0.0)
            } else if ax <= a * gamma {
                ((a - 1.0) * x - x.signum() * a * gamma) / (a - 2.0)
            } else {
                x
            }
        }
    }
}

/// How a set of levels was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LevelMethod {
    Bootstrap,
    NormalAsymptotic,
}

/// Per-column threshold levels for one side of the iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdLevels {
    pub gamma: Vec<f64>,
    pub method: LevelMethod,
}

/// Row/column partition into low-signal and high-signal index sets, read off
/// the exact zero rows of the current frames.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockPartition {
    pub low_rows: Vec<usize>,
    pub high_rows: Vec<usize>,
    pub low_cols: Vec<usize>,
    pub high_cols: Vec<usize>,
}

pub fn partition_blocks(
    u_prev: &OrthonormalFrame,
    v_prev: &OrthonormalFrame,
) -> BlockPartition {
    let low_rows = u_prev.zero_rows();
    let low_cols = v_prev.zero_rows();
    let high_rows = complement(&low_rows, u_prev.dim());
    let high_cols = complement(&low_cols, v_prev.dim());
    BlockPartition {
        low_rows,
        high_rows,
        low_cols,
        high_cols,
    }
}

fn complement(sorted_pres: &[usize], dim: usize) -> Vec<usize> {
    let mut out = Vec::with_capacity(dim - sorted_pres.len());
    let mut it = sorted_pres.iter().peekable();
    for i in 0..dim {
        if it.peek() == Some(&&i) {
            it.next();
        } else {
            out.push(i);
        }
    }
    out
}

/// Threshold levels for the columns of `x * v_prev`.
///
/// For the other side, call with the transposed matrix and the frames
/// swapped: levels for `x' * u` come from `threshold_levels(x', v_prev, u, ...)`.
///
/// Each bootstrap replication draws `rows(x) * |H_v|` entries with
/// replacement from the low block, fills them row-major into an
/// `rows(x) x |H_v|` matrix, pushes it through the current frame restricted
/// to `H_v`, and records per-column sup norms; the level is the median over
/// replications. Replications use disjoint derived RNG substreams, so the
/// result does not depend on scheduling.
pub fn threshold_levels(
    x: &DenseMatrix,
    u_prev: &OrthonormalFrame,
    v_prev: &OrthonormalFrame,
    sigma: &NoiseScale,
    m_boot: usize,
    key: StreamKey,
) -> Result<ThresholdLevels, ThresholdError> {
    if u_prev.dim() != x.rows() || v_prev.dim() != x.cols() || u_prev.rank() != v_prev.rank() {
        return Err(ThresholdError::DimensionMismatch);
    }
    if m_boot == 0 {
        return Err(ThresholdError::BadBootCount);
    }
    let n = x.rows();
    let r = v_prev.rank();
    let parts = partition_blocks(u_prev, v_prev);
    let n_high_cols = parts.high_cols.len();
    if n_high_cols == 0 {
        return Err(ThresholdError::EmptyHighBlock);
    }

    let low_size = (parts.low_rows.len() as f64) * (parts.low_cols.len() as f64);
    let sample_size = (n * n_high_cols) as f64;
    if low_size < sample_size * sample_size.ln() {
        let level = sigma.value() * (2.0 * (n as f64).ln()).sqrt();
        return Ok(ThresholdLevels {
            gamma: vec![level; r],
            method: LevelMethod::NormalAsymptotic,
        });
    }

    if parts.low_rows.is_empty() || parts.low_cols.is_empty() {
        return Err(ThresholdError::EmptyLowBlock {
            low_rows: parts.low_rows.len(),
            low_cols: parts.low_cols.len(),
        });
    }

    // Materialize the low-block population once; replications only index it.
    let mut population = Vec::with_capacity(parts.low_rows.len() * parts.low_cols.len());
    for &i in &parts.low_rows {
        let row = x.row(i);
        for &j in &parts.low_cols {
            population.push(row[j]);
        }
    }
    // Frame rows restricted to the high columns, as a dense |H_v| x r block.
    let v_high: Vec<f64> = parts
        .high_cols
        .iter()
        .flat_map(|&j| v_prev.row(j).iter().copied())
        .collect();

    let sup_norms: Vec<Vec<f64>> = (0..m_boot)
        .into_par_iter()
        .map(|rep| {
            let mut rng = key.child(rep as u64).rng();
            let mut maxes = vec![0.0f64; r];
            let mut row_buf = vec![0.0f64; n_high_cols];
            let mut prod = vec![0.0f64; r];
            for _ in 0..n {
                for slot in row_buf.iter_mut() {
                    *slot = population[rng.gen_range(0..population.len())];
                }
                prod.iter_mut().for_each(|p| *p = 0.0);
                for (h, &z) in row_buf.iter().enumerate() {
                    let vrow = &v_high[h * r..(h + 1) * r];
                    for (p, &v) in prod.iter_mut().zip(vrow) {
                        *p += z * v;
                    }
                }
                for (m, &p) in maxes.iter_mut().zip(prod.iter()) {
                    *m = m.max(p.abs());
                }
            }
            maxes
        })
        .collect();

    let mut gamma = Vec::with_capacity(r);
    for l in 0..r {
        let col: Vec<f64> = sup_norms.iter().map(|rep| rep[l]).collect();
        gamma.push(median(&col).expect("m_boot >= 1"));
    }
    Ok(ThresholdLevels {
        gamma,
        method: LevelMethod::Bootstrap,
    })
}
