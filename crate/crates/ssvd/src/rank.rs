//! Rank estimation by bi-cross-validation on the screened submatrix.
//!
//! Rows and columns of the screened block are split into folds; each
//! held-out block A is predicted from the retained blocks as
//! `B * pinv(D_k) * C` for every candidate rank k, where `D_k` is the
//! rank-k truncation of the diagonally-opposite block. The estimated rank
//! minimizes total squared prediction error, with candidate 0 (predict
//! zero) included so pure noise can be flagged.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frame::OrthonormalFrame;
use crate::init::{screen_axis, Axis, InitError};
use crate::linalg::{reduced_svd, LinalgError};
use crate::matrix::DenseMatrix;
use crate::rng::{stream, StreamKey};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RankError {
    #[error("rank search needs r_max >= 1")]
    BadRankBudget,
    #[error("fold counts must be at least 2, got {rows}x{cols}")]
    BadFolds { rows: usize, cols: usize },
    #[error("a {axis} fold has {size} indices; at least {required} are needed to cross-predict")]
    FoldTooSmall {
        axis: Axis,
        size: usize,
        required: usize,
    },
    #[error(transparent)]
    Init(#[from] InitError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Fold counts for rows and columns of the screened submatrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldScheme {
    pub rows: usize,
    pub cols: usize,
}

impl Default for FoldScheme {
    fn default() -> Self {
        // The smallest scheme: 2 x 2.
        Self { rows: 2, cols: 2 }
    }
}

/// Result of the rank search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankEstimate {
    pub r_hat: usize,
    /// Total squared prediction error for candidate ranks `0..=r_max`.
    pub bcv_errors: Vec<f64>,
    pub folds: FoldScheme,
    pub rows_selected: usize,
    pub cols_selected: usize,
}

/// Estimate the signal rank of `x`.
///
/// Screening selecting nothing on either axis means no detectable signal;
/// that resolves to `r_hat = 0` with all candidate errors tied at zero
/// rather than an error, since "no signal" is an answer, not a failure.
///
/// Candidate ranks beyond what the retained blocks can support keep the
/// last attainable prediction error (rank exhausted), so a small screened
/// submatrix caps the effective search without failing; only folds too
/// small to predict anything (fewer than two indices) are an error.
pub fn estimate_rank(
    x: &DenseMatrix,
    r_max: usize,
    beta: f64,
    alpha: f64,
    folds: FoldScheme,
    seed: u64,
) -> Result<RankEstimate, RankError> {
    if r_max == 0 {
        return Err(RankError::BadRankBudget);
    }
    if folds.rows < 2 || folds.cols < 2 {
        return Err(RankError::BadFolds {
            rows: folds.rows,
            cols: folds.cols,
        });
    }

    let xt = x.transpose();
    let (row_screen, col_screen) = rayon::join(
        || screen_axis(x, beta, alpha),
        || screen_axis(&xt, beta, alpha),
    );
    let row_screen = row_screen?;
    let col_screen = col_screen.map_err(relabel_cols)?;

    if row_screen.selected.is_empty() || col_screen.selected.is_empty() {
        return Ok(RankEstimate {
            r_hat: 0,
            bcv_errors: vec![0.0; r_max + 1],
            folds,
            rows_selected: row_screen.selected.len(),
            cols_selected: col_screen.selected.len(),
        });
    }

    // Generous rank budget: grow each detected selection with the
    // next-strongest indices so the folds are large enough to explore ranks
    // up to r_max. Cross-validation, not the screening test, judges whether
    // the extra indices carry structure.
    let target = 4 * (r_max + 1);
    let row_set = augment_selection(&row_screen.selected, &row_screen.stats, target);
    let col_set = augment_selection(&col_screen.selected, &col_screen.stats, target);
    let rows_selected = row_set.len();
    let cols_selected = col_set.len();

    let sub = x.submatrix(&row_set, &col_set);
    let key = StreamKey::new(seed);
    let row_folds = assign_folds(
        rows_selected,
        folds.rows,
        key.child(stream::FOLD_ROWS),
        Axis::Rows,
    )?;
    let col_folds = assign_folds(
        cols_selected,
        folds.cols,
        key.child(stream::FOLD_COLS),
        Axis::Cols,
    )?;

    let pairs: Vec<(usize, usize)> = (0..folds.rows)
        .flat_map(|i| (0..folds.cols).map(move |j| (i, j)))
        .collect();
    let per_pair: Vec<Result<Vec<f64>, RankError>> = pairs
        .par_iter()
        .map(|&(fi, fj)| block_errors(&sub, &row_folds, &col_folds, fi, fj, r_max))
        .collect();

    let mut bcv_errors = vec![0.0; r_max + 1];
    for res in per_pair {
        let errs = res?;
        for (total, e) in bcv_errors.iter_mut().zip(errs) {
            *total += e;
        }
    }

    let mut r_hat = 0;
    for (k, &err) in bcv_errors.iter().enumerate() {
        if err < bcv_errors[r_hat] {
            r_hat = k;
        }
    }
    Ok(RankEstimate {
        r_hat,
        bcv_errors,
        folds,
        rows_selected,
        cols_selected,
    })
}

/// Pad a nonempty selection to `target` indices, adding the strongest
/// remaining screening statistics first (ties break toward lower index).
fn augment_selection(selected: &[usize], stats: &[f64], target: usize) -> Vec<usize> {
    if selected.len() >= target || selected.len() == stats.len() {
        return selected.to_vec();
    }
    let chosen: std::collections::HashSet<usize> = selected.iter().copied().collect();
    let mut rest: Vec<usize> = (0..stats.len()).filter(|i| !chosen.contains(i)).collect();
    rest.sort_by(|&a, &b| {
        stats[b]
            .partial_cmp(&stats[a])
            .expect("finite stats")
            .then(a.cmp(&b))
    });
    let mut out = selected.to_vec();
    out.extend(rest.into_iter().take(target - selected.len()));
    out.sort_unstable();
    out
}

fn relabel_cols(err: InitError) -> InitError {
    match err {
        InitError::DegenerateScale { .. } => InitError::DegenerateScale { axis: Axis::Cols },
        other => other,
    }
}

/// Random near-equal partition of `0..len` into `k` folds.
fn assign_folds(
    len: usize,
    k: usize,
    key: StreamKey,
    axis: Axis,
) -> Result<Vec<Vec<usize>>, RankError> {
    let mut idx: Vec<usize> = (0..len).collect();
    idx.shuffle(&mut key.rng());
    let base = len / k;
    let rem = len % k;
    let mut folds = Vec::with_capacity(k);
    let mut cursor = 0;
    for f in 0..k {
        let size = base + usize::from(f < rem);
        if size < 2 {
            return Err(RankError::FoldTooSmall {
                axis,
                size,
                required: 2,
            });
        }
        let mut fold: Vec<usize> = idx[cursor..cursor + size].to_vec();
        fold.sort_unstable();
        folds.push(fold);
        cursor += size;
    }
    Ok(folds)
}

/// Squared prediction errors for one held-out block over all candidate ranks.
fn block_errors(
    sub: &DenseMatrix,
    row_folds: &[Vec<usize>],
    col_folds: &[Vec<usize>],
    fi: usize,
    fj: usize,
    r_max: usize,
) -> Result<Vec<f64>, RankError> {
    let held_rows = &row_folds[fi];
    let held_cols = &col_folds[fj];
    let kept_rows: Vec<usize> = (0..row_folds.len())
        .filter(|&f| f != fi)
        .flat_map(|f| row_folds[f].iter().copied())
        .collect();
    let kept_cols: Vec<usize> = (0..col_folds.len())
        .filter(|&f| f != fj)
        .flat_map(|f| col_folds[f].iter().copied())
        .collect();

    let a = sub.submatrix(held_rows, held_cols);
    let b = sub.submatrix(held_rows, &kept_cols);
    let c = sub.submatrix(&kept_rows, held_cols);
    let d = sub.submatrix(&kept_rows, &kept_cols);

    let svd_d = reduced_svd(&d, r_max.min(d.rows().min(d.cols())))?;
    // pinv truncation threshold for numerically-zero singular values
    let tol = f64::EPSILON
        * (d.rows().max(d.cols()) as f64)
        * svd_d.singular_values.first().copied().unwrap_or(0.0);

    // p = B V (held x r), q = U' C (r x held_cols)
    let p = b
        .matmul(&svd_d.right.to_matrix())
        .map_err(LinalgError::from)?;
    let q = frame_transpose_times(&svd_d.left, &c);

    let mut pred = DenseMatrix::zeros(a.rows(), a.cols());
    let mut errors = Vec::with_capacity(r_max + 1);
    errors.push(residual_sq(&a, &pred));
    for k in 1..=r_max {
        if k <= svd_d.singular_values.len() && svd_d.singular_values[k - 1] > tol {
            let inv = 1.0 / svd_d.singular_values[k - 1];
            for i in 0..pred.rows() {
                let pik = p.get(i, k - 1) * inv;
                if pik == 0.0 {
                    continue;
                }
                let pred_row = pred.row_mut(i);
                let q_row = q.row(k - 1);
                for (o, &qv) in pred_row.iter_mut().zip(q_row) {
                    *o += pik * qv;
                }
            }
            errors.push(residual_sq(&a, &pred));
        } else {
            // Rank exhausted: prediction stops improving.
            errors.push(errors[k - 1]);
        }
    }
    Ok(errors)
}

/// `frame' * m` as an `r x cols(m)` matrix.
fn frame_transpose_times(frame: &OrthonormalFrame, m: &DenseMatrix) -> DenseMatrix {
    debug_assert_eq!(frame.dim(), m.rows());
    let r = frame.rank();
    let mut out = DenseMatrix::zeros(r, m.cols());
    for i in 0..m.rows() {
        let f_row = frame.row(i);
        let m_row = m.row(i);
        for (k, &fv) in f_row.iter().enumerate() {
            if fv == 0.0 {
                continue;
            }
            let out_row = out.row_mut(k);
            for (o, &mv) in out_row.iter_mut().zip(m_row) {
                *o += fv * mv;
            }
        }
    }
    out
}

fn residual_sq(a: &DenseMatrix, pred: &DenseMatrix) -> f64 {
    a.as_slice()
        .iter()
        .zip(pred.as_slice())
        .map(|(x, y)| (x - y) * (x - y))
        .sum()
}
