//! The thresholded subspace iteration and its un-thresholded baseline.
//!
//! Each sweep multiplies the data matrix into the current right frame,
//! thresholds entrywise with per-column levels, re-orthonormalizes by QR,
//! then mirrors the steps on the transposed problem. Iteration stops when
//! both successive projection distances fall below the tolerance.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frame::{OrthonormalFrame, ReducedSvd};
use crate::init::{initialize, InitError, SelectionResult};
use crate::linalg::{qr_orthonormalize, subspace_distance, LinalgError};
use crate::matrix::DenseMatrix;
use crate::rng::{stream, StreamKey};
use crate::robust::{estimate_sigma, NoiseScale};
use crate::threshold::{eta, threshold_levels, ThresholdError, ThresholdKind, ThresholdLevels};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(
        "rank collapse at iteration {iteration}: thresholding zeroed column {column} \
         on the {side} side; retry with a smaller rank"
    )]
    RankCollapse {
        side: Side,
        column: usize,
        iteration: usize,
    },
    #[error("subspace iteration hit the cap of {max_iters} iterations (last distance {last_distance:.3e})")]
    MaxItersExceeded {
        max_iters: usize,
        last_distance: f64,
    },
    #[error(transparent)]
    Init(#[from] InitError),
    #[error(transparent)]
    Threshold(#[from] ThresholdError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

impl std::fmt::Display for Side {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Side::Left => write!(f, "left"),
            Side::Right => write!(f, "right"),
        }
    }
}

/// Tuning knobs for [`fit`]. `SsvdConfig::new(rank)` fills in the defaults
/// used throughout: hard thresholding, tolerance 1e-8, at most 100 sweeps,
/// screening quantile 0.95, Holm rate 0.05, 100 bootstrap replications.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SsvdConfig {
    pub rank: usize,
    pub kind: ThresholdKind,
    pub epsilon: f64,
    pub max_iters: usize,
    pub beta: f64,
    pub alpha: f64,
    pub m_boot: usize,
    pub seed: u64,
}

impl SsvdConfig {
    pub fn new(rank: usize) -> Self {
        Self {
            rank,
            kind: ThresholdKind::Hard,
            epsilon: 1e-8,
            max_iters: 100,
            beta: 0.95,
            alpha: 0.05,
            m_boot: 100,
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    fn validate(&self, n: usize, p: usize) -> Result<(), FitError> {
        if self.rank == 0 || self.rank > n.min(p) {
            return Err(FitError::InvalidConfig(format!(
                "rank {} must lie in 1..={}",
                self.rank,
                n.min(p)
            )));
        }
        if !(self.epsilon > 0.0) {
            return Err(FitError::InvalidConfig("epsilon must be positive".into()));
        }
        if self.max_iters == 0 {
            return Err(FitError::InvalidConfig("max_iters must be at least 1".into()));
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(FitError::InvalidConfig("beta must lie in (0,1)".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(FitError::InvalidConfig("alpha must lie in (0,1)".into()));
        }
        if self.m_boot == 0 {
            return Err(FitError::InvalidConfig("m_boot must be at least 1".into()));
        }
        if let ThresholdKind::Scad { a } = self.kind {
            if !(a > 2.0) {
                return Err(FitError::InvalidConfig(format!(
                    "SCAD parameter must exceed 2, got {a}"
                )));
            }
        }
        Ok(())
    }
}

/// Threshold levels and successive distances recorded per sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationTrace {
    pub left: ThresholdLevels,
    pub right: ThresholdLevels,
    pub dist_left: f64,
    pub dist_right: f64,
}

/// Result of the sparse fit.
#[derive(Debug, Clone)]
pub struct SsvdFit {
    pub u_hat: OrthonormalFrame,
    pub v_hat: OrthonormalFrame,
    /// Nonnegative, sorted nonincreasing; `d[l] = u_l' X v_l`.
    pub d_hat: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub u_support: Vec<Vec<usize>>,
    pub v_support: Vec<Vec<usize>>,
    pub sigma_hat: NoiseScale,
    pub selection: SelectionResult,
    pub trace: Vec<IterationTrace>,
}

/// Sparse SVD of `x` by thresholded subspace iteration.
pub fn fit(x: &DenseMatrix, config: &SsvdConfig) -> Result<SsvdFit, FitError> {
    let (n, p) = (x.rows(), x.cols());
    config.validate(n, p)?;
    let r = config.rank;

    let sigma = estimate_sigma(x);
    let frames = initialize(x, r, config.beta, config.alpha)?;
    let selection = frames.selection;
    let xt = x.transpose();

    // Replication streams are keyed by side only, not by iteration: with
    // identical draws each sweep, the levels move only when the block
    // partition moves, so hard-threshold supports can settle instead of
    // dithering on knife-edge coefficients under re-sampled levels.
    let key = StreamKey::new(config.seed).child(stream::BOOTSTRAP);
    let key_left = key.child(stream::SIDE_LEFT);
    let key_right = key.child(stream::SIDE_RIGHT);
    let mut u_prev = frames.u0;
    let mut v_prev = frames.v0;
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    for k in 1..=config.max_iters {
        let gamma_u = threshold_levels(
            x,
            &u_prev,
            &v_prev,
            &sigma,
            config.m_boot,
            key_left,
        )?;
        let u_mul = mat_times_frame(x, &v_prev);
        let u_thr = apply_threshold(&u_mul, &gamma_u.gamma, config.kind)
            .map_err(|column| FitError::RankCollapse {
                side: Side::Left,
                column,
                iteration: k,
            })?;
        let (u_new, _) = qr_orthonormalize(&u_thr).map_err(|e| lift_qr(e, Side::Left, k))?;

        let gamma_v = threshold_levels(
            &xt,
            &v_prev,
            &u_new,
            &sigma,
            config.m_boot,
            key_right,
        )?;
        let v_mul = mat_times_frame(&xt, &u_new);
        let v_thr = apply_threshold(&v_mul, &gamma_v.gamma, config.kind)
            .map_err(|column| FitError::RankCollapse {
                side: Side::Right,
                column,
                iteration: k,
            })?;
        let (v_new, _) = qr_orthonormalize(&v_thr).map_err(|e| lift_qr(e, Side::Right, k))?;

        let dist_left = subspace_distance(&u_new, &u_prev)?;
        let dist_right = subspace_distance(&v_new, &v_prev)?;
        trace.push(IterationTrace {
            left: gamma_u,
            right: gamma_v,
            dist_left,
            dist_right,
        });
        u_prev = u_new;
        v_prev = v_new;
        iterations = k;
        if dist_left.max(dist_right) <= config.epsilon {
            converged = true;
            break;
        }
    }

    let (u_hat, v_hat, d_hat) = finalize_triples(x, u_prev, v_prev);
    let u_support: Vec<Vec<usize>> = (0..r).map(|l| u_hat.column_support(l)).collect();
    let v_support: Vec<Vec<usize>> = (0..r).map(|l| v_hat.column_support(l)).collect();

    Ok(SsvdFit {
        u_hat,
        v_hat,
        d_hat,
        iterations,
        converged,
        u_support,
        v_support,
        sigma_hat: sigma,
        selection,
        trace,
    })
}

/// Plain subspace iteration (no thresholding) from a given starting frame.
/// Returns the leading-`r` singular triples of `x`.
pub fn vanilla_subspace_iteration(
    x: &DenseMatrix,
    r: usize,
    v0: &OrthonormalFrame,
    epsilon: f64,
    max_iters: usize,
) -> Result<ReducedSvd, FitError> {
    let (n, p) = (x.rows(), x.cols());
    if r == 0 || r > n.min(p) {
        return Err(FitError::InvalidConfig(format!(
            "rank {r} must lie in 1..={}",
            n.min(p)
        )));
    }
    if v0.dim() != p || v0.rank() != r {
        return Err(FitError::InvalidConfig(format!(
            "starting frame is {}x{}, expected {}x{}",
            v0.dim(),
            v0.rank(),
            p,
            r
        )));
    }
    if !(epsilon > 0.0) || max_iters == 0 {
        return Err(FitError::InvalidConfig(
            "epsilon must be positive and max_iters at least 1".into(),
        ));
    }

    let xt = x.transpose();
    let mut v = v0.clone();
    let mut u_opt: Option<OrthonormalFrame> = None;
    let mut last_distance = f64::INFINITY;
    for _ in 0..max_iters {
        let (u_new, _) = qr_orthonormalize(&mat_times_frame(x, &v))?;
        let (v_new, _) = qr_orthonormalize(&mat_times_frame(&xt, &u_new))?;
        let dist_right = subspace_distance(&v_new, &v)?;
        let dist_left = match &u_opt {
            Some(u) => subspace_distance(&u_new, u)?,
            None => f64::INFINITY,
        };
        last_distance = dist_left.max(dist_right);
        u_opt = Some(u_new);
        v = v_new;
        if last_distance <= epsilon {
            return Ok(ritz_extract(x, &u_opt.expect("set above"), &v)?);
        }
    }
    Err(FitError::MaxItersExceeded {
        max_iters,
        last_distance,
    })
}

/// Rotate converged subspace frames onto the singular triples of `x`:
/// take the small matrix `B = U' X V`, decompose it exactly, and absorb its
/// factors into the frames. Columns of converged subspace iteration need not
/// be individually aligned, so this extraction step is what turns subspace
/// accuracy into triple accuracy.
fn ritz_extract(
    x: &DenseMatrix,
    u: &OrthonormalFrame,
    v: &OrthonormalFrame,
) -> Result<ReducedSvd, FitError> {
    let r = u.rank();
    let w = mat_times_frame(x, v); // n x r
    let mut b = DenseMatrix::zeros(r, r);
    for i in 0..u.dim() {
        let u_row = u.row(i);
        let w_row = w.row(i);
        for (k, &uv) in u_row.iter().enumerate() {
            if uv == 0.0 {
                continue;
            }
            let b_row = b.row_mut(k);
            for (l, &wv) in w_row.iter().enumerate() {
                b_row[l] += uv * wv;
            }
        }
    }
    let small = crate::linalg::reduced_svd(&b, r)?;
    let mut u_rot = u.rotate(&small.left);
    let mut v_rot = v.rotate(&small.right);
    // Right-vector sign convention in the ambient space.
    for l in 0..r {
        let col = v_rot.column(l);
        let mut max_idx = 0;
        let mut max_abs = 0.0f64;
        for (j, &val) in col.iter().enumerate() {
            if val.abs() > max_abs {
                max_abs = val.abs();
                max_idx = j;
            }
        }
        if col[max_idx] < 0.0 {
            v_rot.negate_column(l);
            u_rot.negate_column(l);
        }
    }
    Ok(ReducedSvd::new(u_rot, small.singular_values, v_rot).map_err(LinalgError::from)?)
}

fn lift_qr(err: LinalgError, side: Side, iteration: usize) -> FitError {
    match err {
        LinalgError::RankCollapse { column } => FitError::RankCollapse {
            side,
            column,
            iteration,
        },
        other => FitError::Linalg(other),
    }
}

/// `x * q`, restricted to the nonzero rows of `q`. Zero rows of the frame
/// contribute nothing, so the product cost scales with the support size.
fn mat_times_frame(x: &DenseMatrix, q: &OrthonormalFrame) -> DenseMatrix {
    debug_assert_eq!(x.cols(), q.dim());
    let n = x.rows();
    let r = q.rank();
    let support = q.joint_support();
    let mut out = DenseMatrix::zeros(n, r);
    let fill = |(i, out_row): (usize, &mut [f64])| {
        let x_row = x.row(i);
        for &j in &support {
            let xij = x_row[j];
            if xij == 0.0 {
                continue;
            }
            for (o, &qv) in out_row.iter_mut().zip(q.row(j)) {
                *o += xij * qv;
            }
        }
    };
    if n >= 64 {
        out.as_mut_slice()
            .par_chunks_mut(r)
            .enumerate()
            .for_each(fill);
    } else {
        out.as_mut_slice().chunks_mut(r).enumerate().for_each(fill);
    }
    out
}

/// Entrywise eta with a shared level per column. Fails with the offending
/// column index if a whole column is zeroed.
fn apply_threshold(
    m: &DenseMatrix,
    gamma: &[f64],
    kind: ThresholdKind,
) -> Result<DenseMatrix, usize> {
    let r = m.cols();
    debug_assert_eq!(gamma.len(), r);
    let mut out = DenseMatrix::zeros(m.rows(), r);
    let mut any_nonzero = vec![false; r];
    for i in 0..m.rows() {
        let src = m.row(i);
        let dst = out.row_mut(i);
        for l in 0..r {
            let y = eta(src[l], gamma[l], kind);
            dst[l] = y;
            if y != 0.0 {
                any_nonzero[l] = true;
            }
        }
    }
    match any_nonzero.iter().position(|&b| !b) {
        Some(column) => Err(column),
        None => Ok(out),
    }
}

/// Compute `d_l = u_l' x v_l`, make them nonnegative by flipping `u`
/// columns, apply the right-vector sign convention, and sort the triples by
/// `d` descending.
fn finalize_triples(
    x: &DenseMatrix,
    u: OrthonormalFrame,
    v: OrthonormalFrame,
) -> (OrthonormalFrame, OrthonormalFrame, Vec<f64>) {
    let r = u.rank();
    let w = mat_times_frame(x, &v); // n x r
    let mut u = u;
    let mut v = v;
    let mut d = vec![0.0; r];
    for l in 0..r {
        let mut s = 0.0;
        for i in 0..u.dim() {
            s += u.get(i, l) * w.get(i, l);
        }
        if s < 0.0 {
            u.negate_column(l);
            s = -s;
        }
        d[l] = s;
    }
    // Right-vector sign convention: largest-magnitude entry positive;
    // flipping both sides keeps d unchanged.
    for l in 0..r {
        let col = v.column(l);
        let mut max_idx = 0;
        let mut max_abs = 0.0f64;
        for (j, &val) in col.iter().enumerate() {
            if val.abs() > max_abs {
                max_abs = val.abs();
                max_idx = j;
            }
        }
        if col[max_idx] < 0.0 {
            v.negate_column(l);
            u.negate_column(l);
        }
    }
    let mut order: Vec<usize> = (0..r).collect();
    order.sort_by(|&a, &b| d[b].partial_cmp(&d[a]).expect("finite"));
    if order.iter().enumerate().any(|(l, &p)| l != p) {
        let d_sorted: Vec<f64> = order.iter().map(|&l| d[l]).collect();
        let u_sorted = u.permute_columns(&order);
        let v_sorted = v.permute_columns(&order);
        (u_sorted, v_sorted, d_sorted)
    } else {
        (u, v, d)
    }
}
