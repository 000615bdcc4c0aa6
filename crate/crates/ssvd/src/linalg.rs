//! Dense linear-algebra kernels: Householder QR, a symmetric eigensolver,
//! reduced SVD, and the projection distance between subspaces.

use thiserror::Error;

use crate::frame::{norm2, FrameError, OrthonormalFrame, ReducedSvd};
use crate::matrix::{dot, DenseMatrix, MatrixError};

/// Columns whose residual norm falls below this fraction of the original
/// column norm are treated as linearly dependent.
const RANK_TOL: f64 = 1e-12;

/// QL iteration cap per eigenvalue.
const EIGEN_MAX_SWEEPS: usize = 60;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("rank collapse: column {column} is numerically dependent or zero")]
    RankCollapse { column: usize },
    #[error("eigensolver failed to converge for a {size}x{size} matrix")]
    NoConvergence { size: usize },
    #[error("requested rank {requested} exceeds min dimension {max}")]
    InvalidRank { requested: usize, max: usize },
    #[error("QR input must have rows >= cols, got {rows}x{cols}")]
    NotThin { rows: usize, cols: usize },
    #[error(transparent)]
    Frame(#[from] FrameError),
    #[error(transparent)]
    Matrix(#[from] MatrixError),
}

// ---------------------------------------------------------------------------
// Householder QR
// ---------------------------------------------------------------------------

/// Thin QR factorization `m = q * r_factor` by Householder reflections.
///
/// `q` has orthonormal columns spanning the column space of `m`, and
/// `r_factor` is upper triangular with nonnegative diagonal, which fixes the
/// factorization uniquely.
pub fn qr_orthonormalize(
    m: &DenseMatrix,
) -> Result<(OrthonormalFrame, DenseMatrix), LinalgError> {
    let n = m.rows();
    let r = m.cols();
    if r > n {
        return Err(LinalgError::NotThin { rows: n, cols: r });
    }

    let col_scale: Vec<f64> = (0..r).map(|j| norm2(&m.column(j))).collect();

    let mut a = m.clone();
    // Householder vectors, one per column, each of length n - k.
    let mut reflectors: Vec<Vec<f64>> = Vec::with_capacity(r);

    for k in 0..r {
        let mut v: Vec<f64> = (k..n).map(|i| a.get(i, k)).collect();
        let norm_x = norm2(&v);
        if norm_x <= RANK_TOL * col_scale[k] || norm_x == 0.0 {
            return Err(LinalgError::RankCollapse { column: k });
        }
        let alpha = if v[0] >= 0.0 { -norm_x } else { norm_x };
        v[0] -= alpha;
        let vtv = dot(&v, &v);
        // vtv = 2 * norm_x * (norm_x + |x0|) > 0 because norm_x > 0
        let beta = 2.0 / vtv;

        a.set(k, k, alpha);
        for i in k + 1..n {
            a.set(i, k, 0.0);
        }
        for j in k + 1..r {
            let mut c = 0.0;
            for (t, vi) in v.iter().enumerate() {
                c += vi * a.get(k + t, j);
            }
            c *= beta;
            for (t, vi) in v.iter().enumerate() {
                let cur = a.get(k + t, j);
                a.set(k + t, j, cur - c * vi);
            }
        }
        reflectors.push(v);
    }

    // Accumulate the thin Q by applying reflectors to I_{n x r} in reverse.
    let mut q = DenseMatrix::zeros(n, r);
    for k in 0..r {
        q.set(k, k, 1.0);
    }
    for k in (0..r).rev() {
        let v = &reflectors[k];
        let beta = 2.0 / dot(v, v);
        for j in 0..r {
            let mut c = 0.0;
            for (t, vi) in v.iter().enumerate() {
                c += vi * q.get(k + t, j);
            }
            c *= beta;
            for (t, vi) in v.iter().enumerate() {
                let cur = q.get(k + t, j);
                q.set(k + t, j, cur - c * vi);
            }
        }
    }

    let mut r_factor = DenseMatrix::zeros(r, r);
    for i in 0..r {
        for j in i..r {
            r_factor.set(i, j, a.get(i, j));
        }
    }
    // Fix signs so the diagonal of R is nonnegative.
    for k in 0..r {
        if r_factor.get(k, k) < 0.0 {
            for j in k..r {
                r_factor.set(k, j, -r_factor.get(k, j));
            }
            for i in 0..n {
                q.set(i, k, -q.get(i, k));
            }
        }
    }
    // q = m * r^{-1}, so rows that are zero in every column of m are zero in
    // exact arithmetic; restore the exact zeros that reflector accumulation
    // smears with rounding dust. Support sets are read off exact zeros.
    for i in 0..n {
        if m.row(i).iter().all(|&x| x == 0.0) {
            q.row_mut(i).fill(0.0);
        }
    }

    let frame = OrthonormalFrame::from_parts_unchecked(n, r, q.as_slice().to_vec());
    Ok((frame, r_factor))
}

// ---------------------------------------------------------------------------
// Symmetric eigensolver: Householder tridiagonalization + implicit QL
// ---------------------------------------------------------------------------

/// Eigendecomposition of a symmetric matrix. Returns eigenvalues in
/// nonincreasing order with matching eigenvectors (each a length-n vector).
pub fn symmetric_eigen(a: &DenseMatrix) -> Result<(Vec<f64>, Vec<Vec<f64>>), LinalgError> {
    assert_eq!(a.rows(), a.cols(), "symmetric_eigen requires a square matrix");
    let n = a.rows();
    if n == 1 {
        return Ok((vec![a.get(0, 0)], vec![vec![1.0]]));
    }

    let mut work = a.clone();
    let mut diag = vec![0.0; n];
    let mut off = vec![0.0; n]; // off[k] couples indices k and k+1
    // Rows of `basis` are the current orthogonal basis; starts as Q^T from
    // the tridiagonalization, ends as the eigenvectors.
    let mut basis: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut row = vec![0.0; n];
            row[i] = 1.0;
            row
        })
        .collect();

    tridiagonalize(&mut work, &mut diag, &mut off, &mut basis);
    ql_implicit(&mut diag, &mut off, &mut basis, n)?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| diag[j].partial_cmp(&diag[i]).unwrap());
    let values: Vec<f64> = order.iter().map(|&i| diag[i]).collect();
    let mut vectors: Vec<Vec<f64>> = Vec::with_capacity(n);
    // Drain in sorted order without cloning each row twice.
    let mut taken: Vec<Option<Vec<f64>>> = basis.into_iter().map(Some).collect();
    for &i in &order {
        vectors.push(taken[i].take().expect("order is a permutation"));
    }
    Ok((values, vectors))
}

/// Reduce `work` to tridiagonal form, accumulating the transform into the
/// rows of `basis` so that `a = basis^T * T * basis` on exit.
fn tridiagonalize(
    work: &mut DenseMatrix,
    diag: &mut [f64],
    off: &mut [f64],
    basis: &mut [Vec<f64>],
) {
    let n = work.rows();
    let mut v = vec![0.0; n];
    let mut w = vec![0.0; n];

    for k in 0..n.saturating_sub(2) {
        let m = n - k - 1; // length of the column below the diagonal
        // The column below A[k][k] equals the row tail by symmetry.
        let x = &work.row(k)[k + 1..];
        let norm_x = norm2(x);
        if norm_x == 0.0 {
            off[k] = 0.0;
            continue;
        }
        let alpha = if x[0] >= 0.0 { -norm_x } else { norm_x };
        v[..m].copy_from_slice(x);
        v[0] -= alpha;
        // |v[0]| >= norm_x > 0, so v'v > 0
        let beta = 2.0 / dot(&v[..m], &v[..m]);

        // w = beta * A_sub * v, then w -= (beta/2)(v'w) v
        for (i, wi) in w[..m].iter_mut().enumerate() {
            let row = &work.row(k + 1 + i)[k + 1..];
            *wi = beta * dot(row, &v[..m]);
        }
        let gamma = 0.5 * beta * dot(&v[..m], &w[..m]);
        for (wi, vi) in w[..m].iter_mut().zip(&v[..m]) {
            *wi -= gamma * vi;
        }
        // A_sub -= v w' + w v'
        for i in 0..m {
            let vi = v[i];
            let wi = w[i];
            let row = &mut work.row_mut(k + 1 + i)[k + 1..];
            for ((r, &vj), &wj) in row.iter_mut().zip(&v[..m]).zip(&w[..m]) {
                *r -= vi * wj + wi * vj;
            }
        }
        off[k] = alpha;

        // Accumulate: basis := H_k * basis, i.e. rows k+1.. get the update.
        for col in 0..n {
            let mut c = 0.0;
            for (t, vi) in v[..m].iter().enumerate() {
                c += vi * basis[k + 1 + t][col];
            }
            c *= beta;
            for (t, vi) in v[..m].iter().enumerate() {
                basis[k + 1 + t][col] -= c * vi;
            }
        }
    }
    if n >= 2 {
        off[n - 2] = work.get(n - 2, n - 1);
    }
    for i in 0..n {
        diag[i] = work.get(i, i);
    }
    off[n - 1] = 0.0;
}

/// Implicit-shift QL iterations on the tridiagonal (diag, off), rotating the
/// rows of `basis` along. Classic tql2 recurrence.
fn ql_implicit(
    diag: &mut [f64],
    off: &mut [f64],
    basis: &mut [Vec<f64>],
    n: usize,
) -> Result<(), LinalgError> {
    for l in 0..n {
        let mut sweeps = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = diag[m].abs() + diag[m + 1].abs();
                if off[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            sweeps += 1;
            if sweeps > EIGEN_MAX_SWEEPS {
                return Err(LinalgError::NoConvergence { size: n });
            }
            let mut g = (diag[l + 1] - diag[l]) / (2.0 * off[l]);
            let mut r = g.hypot(1.0);
            g = diag[m] - diag[l] + off[l] / (g + r.copysign(g));
            let (mut s, mut c) = (1.0f64, 1.0f64);
            let mut p = 0.0f64;
            let mut underflow = false;
            for i in (l..m).rev() {
                let mut f = s * off[i];
                let b = c * off[i];
                r = f.hypot(g);
                off[i + 1] = r;
                if r == 0.0 {
                    diag[i + 1] -= p;
                    off[m] = 0.0;
                    underflow = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = diag[i + 1] - p;
                r = (diag[i] - g) * s + 2.0 * c * b;
                p = s * r;
                diag[i + 1] = g + p;
                g = c * r - b;

                let (head, tail) = basis.split_at_mut(i + 1);
                let row_i = &mut head[i];
                let row_i1 = &mut tail[0];
                for (zi, zi1) in row_i.iter_mut().zip(row_i1.iter_mut()) {
                    f = *zi1;
                    *zi1 = s * *zi + c * f;
                    *zi = c * *zi - s * f;
                }
            }
            if underflow {
                continue;
            }
            diag[l] -= p;
            off[l] = g;
            off[m] = 0.0;
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Reduced SVD via the smaller Gram matrix
// ---------------------------------------------------------------------------

/// Top-`r` singular triples of `m`.
///
/// The spectral problem is solved on the smaller of `m m^T` and `m^T m`; the
/// other side's vectors are recovered by applying `m` and normalizing, with
/// singular values re-estimated from those products (more accurate than the
/// square roots of the Gram eigenvalues for small singular values).
///
/// Sign convention: the largest-magnitude entry of each right singular
/// vector is positive; ties resolve to the lowest index.
pub fn reduced_svd(m: &DenseMatrix, r: usize) -> Result<ReducedSvd, LinalgError> {
    let (n, p) = (m.rows(), m.cols());
    let smin = n.min(p);
    if r == 0 || r > smin {
        return Err(LinalgError::InvalidRank {
            requested: r,
            max: smin,
        });
    }

    let rows_side_smaller = n <= p;
    let gram = if rows_side_smaller {
        m.gram_rows()
    } else {
        m.gram_cols()
    };
    let (_eigvals, eigvecs) = symmetric_eigen(&gram)?;

    // Small side frame columns are the top-r Gram eigenvectors.
    let small_cols: Vec<Vec<f64>> = eigvecs.into_iter().take(r).collect();

    // Other side: w_l = m' u_l (or m v_l), sigma_l = ||w_l||.
    let sigma_floor = {
        // Anything below roughly eps * sigma_max is numerically zero.
        let scale = m.max_abs() * (n.max(p) as f64).sqrt();
        scale * 1e-13
    };
    let other_dim = if rows_side_smaller { p } else { n };
    // Stack the small-side vectors as rows and recover the other side in one
    // parallel product: row l of `products` is m^T u_l (resp. m v_l).
    let small_stacked = {
        let mut data = Vec::with_capacity(r * smin);
        for sc in &small_cols {
            data.extend_from_slice(sc);
        }
        DenseMatrix::from_vec(r, smin, data)?
    };
    let products = if rows_side_smaller {
        small_stacked.matmul(m)?
    } else {
        small_stacked.matmul_bt(m)?
    };
    let mut sigmas = vec![0.0; r];
    let mut other_cols: Vec<Vec<f64>> = Vec::with_capacity(r);
    for l in 0..r {
        let mut w = products.row(l).to_vec();
        let s = norm2(&w);
        if s > sigma_floor {
            for x in &mut w {
                *x /= s;
            }
            sigmas[l] = s;
            other_cols.push(w);
        } else {
            sigmas[l] = 0.0;
            other_cols.push(Vec::new()); // completed below
        }
    }
    complete_degenerate_columns(&mut other_cols, other_dim);
    // The normalized products lose orthogonality when singular values are
    // close or tiny; with a healthy spread the cross terms are bounded by
    // roughly eps * (sigma_max / sigma_min)^2 and the check can be skipped.
    let sigma_max = sigmas.iter().cloned().fold(0.0f64, f64::max);
    let sigma_min_pos = sigmas
        .iter()
        .cloned()
        .filter(|&s| s > 0.0)
        .fold(f64::INFINITY, f64::min);
    let needs_cleanup =
        sigmas.iter().any(|&s| s == 0.0) || sigma_min_pos < 1e-2 * sigma_max;
    if needs_cleanup {
        for _ in 0..2 {
            if max_cross_defect(&other_cols) <= 1e-12 {
                break;
            }
            gram_schmidt_pass(&mut other_cols, other_dim);
        }
    }

    // Order by recomputed sigma, descending; stable for ties.
    let mut order: Vec<usize> = (0..r).collect();
    order.sort_by(|&a, &b| sigmas[b].partial_cmp(&sigmas[a]).unwrap());
    let sigmas_sorted: Vec<f64> = order.iter().map(|&l| sigmas[l]).collect();

    let (u_src, v_src): (&[Vec<f64>], &[Vec<f64>]) = if rows_side_smaller {
        (&small_cols, &other_cols)
    } else {
        (&other_cols, &small_cols)
    };
    // Sign convention read off the right singular vectors before assembly.
    let flip: Vec<bool> = order
        .iter()
        .map(|&l| {
            let col = &v_src[l];
            let mut max_idx = 0;
            let mut max_abs = 0.0f64;
            for (j, &x) in col.iter().enumerate() {
                if x.abs() > max_abs {
                    max_abs = x.abs();
                    max_idx = j;
                }
            }
            col[max_idx] < 0.0
        })
        .collect();

    let assemble = |cols: &[Vec<f64>], dim: usize| -> Vec<f64> {
        let mut data = vec![0.0; dim * r];
        for (l_new, &l_old) in order.iter().enumerate() {
            let sgn = if flip[l_new] { -1.0 } else { 1.0 };
            for (i, &x) in cols[l_old].iter().enumerate() {
                data[i * r + l_new] = sgn * x;
            }
        }
        data
    };
    let left = OrthonormalFrame::new(n, r, assemble(u_src, n))?;
    let right = OrthonormalFrame::new(p, r, assemble(v_src, p))?;
    Ok(ReducedSvd::new(left, sigmas_sorted, right)?)
}

/// Replace empty slots with canonical basis vectors orthogonalized against
/// the existing columns. Deterministic: tries e_0, e_1, ... in order.
fn complete_degenerate_columns(cols: &mut [Vec<f64>], dim: usize) {
    for l in 0..cols.len() {
        if !cols[l].is_empty() {
            continue;
        }
        let mut chosen = None;
        for t in 0..dim {
            let mut w = vec![0.0; dim];
            w[t] = 1.0;
            for other in cols.iter() {
                if other.is_empty() {
                    continue;
                }
                let c = dot(other, &w);
                for (wi, oi) in w.iter_mut().zip(other) {
                    *wi -= c * oi;
                }
            }
            let nrm = norm2(&w);
            if nrm > 0.5 {
                for x in &mut w {
                    *x /= nrm;
                }
                chosen = Some(w);
                break;
            }
        }
        cols[l] = chosen.expect("fewer columns than dimensions, completion must exist");
    }
}

fn max_cross_defect(cols: &[Vec<f64>]) -> f64 {
    let mut defect = 0.0f64;
    for a in 0..cols.len() {
        for b in a..cols.len() {
            let target = if a == b { 1.0 } else { 0.0 };
            defect = defect.max((dot(&cols[a], &cols[b]) - target).abs());
        }
    }
    defect
}

fn gram_schmidt_pass(cols: &mut [Vec<f64>], dim: usize) {
    for l in 0..cols.len() {
        for m in 0..l {
            let c = dot(&cols[m], &cols[l]);
            let (head, tail) = cols.split_at_mut(l);
            for (x, y) in tail[0].iter_mut().zip(&head[m]) {
                *x -= c * y;
            }
        }
        let nrm = norm2(&cols[l]);
        if nrm > 0.0 {
            for x in &mut cols[l] {
                *x /= nrm;
            }
        } else {
            // Collapsed during re-orthogonalization: fall back to completion.
            cols[l] = Vec::new();
            let mut tmp: Vec<Vec<f64>> = cols.to_vec();
            complete_degenerate_columns(&mut tmp, dim);
            cols[l] = tmp[l].clone();
        }
    }
}

/// Random frame with orthonormal columns: Gaussian entries followed by QR.
/// Gaussian matrices have full column rank almost surely.
pub fn random_orthonormal_frame<R: rand::Rng>(
    dim: usize,
    rank: usize,
    rng: &mut R,
) -> Result<OrthonormalFrame, LinalgError> {
    use rand_distr::StandardNormal;
    let data: Vec<f64> = (0..dim * rank)
        .map(|_| rng.sample::<f64, _>(StandardNormal))
        .collect();
    let m = DenseMatrix::from_vec(dim, rank, data)?;
    let (q, _) = qr_orthonormalize(&m)?;
    Ok(q)
}

// ---------------------------------------------------------------------------
// Subspace distance
// ---------------------------------------------------------------------------

/// `||P_a - P_b||_2^2` for equal-rank frames, the squared sine of the largest
/// principal angle. Computed as `1 - sigma_min(a^T b)^2`, which avoids forming
/// the ambient projection matrices.
pub fn subspace_distance(
    a: &OrthonormalFrame,
    b: &OrthonormalFrame,
) -> Result<f64, LinalgError> {
    if a.dim() != b.dim() || a.rank() != b.rank() {
        return Err(LinalgError::Frame(FrameError::DimensionMismatch {
            a_dim: a.dim(),
            a_rank: a.rank(),
            b_dim: b.dim(),
            b_rank: b.rank(),
        }));
    }
    let cross = a.gram_with(b)?;
    let gram = cross.gram_cols();
    let (eigvals, _) = symmetric_eigen(&gram)?;
    let lambda_min = eigvals.last().copied().unwrap_or(0.0).max(0.0);
    Ok((1.0 - lambda_min).clamp(0.0, 1.0))
}
