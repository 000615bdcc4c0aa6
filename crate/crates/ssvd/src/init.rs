//! Sparse initialization: robust row/column screening with Holm multiple
//! testing, a reduced SVD of the selected submatrix, and zero-padded frames.

use std::f64::consts::SQRT_2;

use thiserror::Error;

use crate::frame::OrthonormalFrame;
use crate::linalg::{reduced_svd, LinalgError};
use crate::matrix::DenseMatrix;
use crate::robust::{abs_quantile, huber_rho, mad, median, MAD_NORMAL_FACTOR};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InitError {
    #[error("degenerate scale while screening {axis}: all Huberized sums are equal")]
    DegenerateScale { axis: Axis },
    #[error("screening selected {selected} {axis} indices, fewer than rank {required}")]
    InsufficientSelection {
        axis: Axis,
        selected: usize,
        required: usize,
    },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Rows,
    Cols,
}

impl std::fmt::Display for Axis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Axis::Rows => write!(f, "rows"),
            Axis::Cols => write!(f, "cols"),
        }
    }
}

/// Outcome of screening one axis.
#[derive(Debug, Clone, PartialEq)]
pub struct AxisScreen {
    /// Selected indices, ascending.
    pub selected: Vec<usize>,
    /// Huberized sums, one per row of the screened matrix.
    pub stats: Vec<f64>,
    /// The Huberization level (beta-quantile of |entries|).
    pub delta: f64,
}

/// Row/column selections that seeded the initialization.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionResult {
    pub rows: Vec<usize>,
    pub cols: Vec<usize>,
    pub huber_delta: f64,
    pub row_stats: Vec<f64>,
    pub col_stats: Vec<f64>,
}

/// Zero-padded starting frames.
#[derive(Debug, Clone)]
pub struct InitFrames {
    pub u0: OrthonormalFrame,
    pub v0: OrthonormalFrame,
    pub selection: SelectionResult,
}

/// Standard normal upper-tail probability `1 - Phi(z)`.
#[inline]
pub(crate) fn normal_sf(z: f64) -> f64 {
    0.5 * libm::erfc(z / SQRT_2)
}

/// Holm step-down rejection set at family-wise error rate `alpha`.
///
/// P-values are sorted ascending (stable, so ties keep original-index
/// order); hypothesis k (1-based) is rejected while
/// `p_(k) <= alpha / (m - k + 1)`, stopping at the first failure. Returns
/// the original indices of rejected hypotheses, ascending.
pub fn holm_reject(pvalues: &[f64], alpha: f64) -> Vec<usize> {
    assert!(alpha > 0.0 && alpha < 1.0, "alpha must lie in (0,1)");
    let m = pvalues.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| pvalues[a].partial_cmp(&pvalues[b]).expect("finite p-values"));
    let mut rejected = Vec::new();
    for (k, &idx) in order.iter().enumerate() {
        if pvalues[idx] <= alpha / (m - k) as f64 {
            rejected.push(idx);
        } else {
            break;
        }
    }
    rejected.sort_unstable();
    rejected
}

/// Screen the rows of `x` for signal. Callers pass the transpose to screen
/// columns.
///
/// Entries are Huberized at the beta-quantile of |entries|, summed per row,
/// robustly standardized via median and 1.4826*MAD, converted to normal
/// upper-tail p-values, and filtered through Holm at rate `alpha`.
///
/// A zero quantile means the matrix is mostly exact zeros (a noiseless
/// sparse signal); the Huberized statistics degenerate there, so screening
/// falls back to selecting rows with any nonzero entry.
pub fn screen_axis(x: &DenseMatrix, beta: f64, alpha: f64) -> Result<AxisScreen, InitError> {
    screen_axis_labeled(x, beta, alpha, Axis::Rows)
}

fn screen_axis_labeled(
    x: &DenseMatrix,
    beta: f64,
    alpha: f64,
    axis: Axis,
) -> Result<AxisScreen, InitError> {
    assert!(beta > 0.0 && beta < 1.0, "beta must lie in (0,1)");
    let n = x.rows();
    let delta = abs_quantile(x, beta);

    if delta == 0.0 {
        let stats: Vec<f64> = (0..n)
            .map(|i| x.row(i).iter().map(|v| v * v).sum())
            .collect();
        let selected = (0..n).filter(|&i| stats[i] > 0.0).collect();
        return Ok(AxisScreen {
            selected,
            stats,
            delta,
        });
    }

    let stats: Vec<f64> = (0..n)
        .map(|i| x.row(i).iter().map(|&v| huber_rho(v, delta)).sum())
        .collect();
    let mu = median(&stats).expect("nonempty");
    let scale = MAD_NORMAL_FACTOR * mad(&stats).expect("nonempty");
    if scale == 0.0 {
        // Over half the Huberized sums coincide exactly. That happens on
        // noise-free data where null rows are identically zero; the rows
        // strictly above the median are then exactly the signal. With no
        // separation at all (e.g. a constant matrix) screening cannot say
        // anything.
        let selected: Vec<usize> = (0..n).filter(|&i| stats[i] > mu).collect();
        if selected.is_empty() {
            return Err(InitError::DegenerateScale { axis });
        }
        return Ok(AxisScreen {
            selected,
            stats,
            delta,
        });
    }
    let pvalues: Vec<f64> = stats.iter().map(|&t| normal_sf((t - mu) / scale)).collect();
    let selected = holm_reject(&pvalues, alpha);
    Ok(AxisScreen {
        selected,
        stats,
        delta,
    })
}

/// Run screening on both axes, take the reduced SVD of the selected
/// submatrix, and zero-pad its singular vectors to full dimension.
pub fn initialize(
    x: &DenseMatrix,
    r: usize,
    beta: f64,
    alpha: f64,
) -> Result<InitFrames, InitError> {
    let xt = x.transpose();
    let (row_screen, col_screen) = rayon::join(
        || screen_axis_labeled(x, beta, alpha, Axis::Rows),
        || screen_axis_labeled(&xt, beta, alpha, Axis::Cols),
    );
    let row_screen = row_screen?;
    let col_screen = col_screen?;

    if row_screen.selected.len() < r {
        return Err(InitError::InsufficientSelection {
            axis: Axis::Rows,
            selected: row_screen.selected.len(),
            required: r,
        });
    }
    if col_screen.selected.len() < r {
        return Err(InitError::InsufficientSelection {
            axis: Axis::Cols,
            selected: col_screen.selected.len(),
            required: r,
        });
    }

    let sub = x.submatrix(&row_screen.selected, &col_screen.selected);
    let svd = reduced_svd(&sub, r)?;

    let u0 = zero_pad(&svd.left, &row_screen.selected, x.rows());
    let v0 = zero_pad(&svd.right, &col_screen.selected, x.cols());
    Ok(InitFrames {
        u0,
        v0,
        selection: SelectionResult {
            rows: row_screen.selected,
            cols: col_screen.selected,
            huber_delta: row_screen.delta,
            row_stats: row_screen.stats,
            col_stats: col_screen.stats,
        },
    })
}

/// Embed a frame on an index set into the full dimension; rows outside the
/// set are exactly zero, so orthonormality is preserved as-is.
fn zero_pad(frame: &OrthonormalFrame, index_set: &[usize], dim: usize) -> OrthonormalFrame {
    debug_assert_eq!(frame.dim(), index_set.len());
    let r = frame.rank();
    let mut data = vec![0.0; dim * r];
    for (t, &i) in index_set.iter().enumerate() {
        data[i * r..(i + 1) * r].copy_from_slice(frame.row(t));
    }
    OrthonormalFrame::from_parts_unchecked(dim, r, data)
}
