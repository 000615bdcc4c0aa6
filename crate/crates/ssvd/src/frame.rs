//! Frames with orthonormal columns and the reduced SVD result type.

use thiserror::Error;

use crate::matrix::{dot, DenseMatrix};

/// Max-norm tolerance on `Q^T Q - I` for a frame to count as orthonormal.
pub const ORTHO_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FrameError {
    #[error("frame rank {rank} exceeds ambient dimension {dim}")]
    RankExceedsDim { dim: usize, rank: usize },
    #[error("frame data length {len} does not match {dim}x{rank}")]
    ShapeMismatch { dim: usize, rank: usize, len: usize },
    #[error("columns are not orthonormal: max |Q'Q - I| = {defect:.3e}")]
    NotOrthonormal { defect: f64 },
    #[error("frame shapes differ: {a_dim}x{a_rank} vs {b_dim}x{b_rank}")]
    DimensionMismatch {
        a_dim: usize,
        a_rank: usize,
        b_dim: usize,
        b_rank: usize,
    },
    #[error("singular values must be nonnegative and nonincreasing at index {index}")]
    BadSingularValues { index: usize },
}

/// A `dim x rank` matrix with orthonormal columns, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct OrthonormalFrame {
    dim: usize,
    rank: usize,
    data: Vec<f64>,
}

impl OrthonormalFrame {
    /// Build a frame, verifying `max |Q'Q - I| <= ORTHO_TOL`.
    pub fn new(dim: usize, rank: usize, data: Vec<f64>) -> Result<Self, FrameError> {
        if rank > dim || rank == 0 {
            return Err(FrameError::RankExceedsDim { dim, rank });
        }
        if data.len() != dim * rank {
            return Err(FrameError::ShapeMismatch {
                dim,
                rank,
                len: data.len(),
            });
        }
        let frame = Self { dim, rank, data };
        let defect = frame.ortho_defect();
        if !(defect <= ORTHO_TOL) {
            return Err(FrameError::NotOrthonormal { defect });
        }
        Ok(frame)
    }

    pub fn from_columns(dim: usize, columns: &[Vec<f64>]) -> Result<Self, FrameError> {
        let rank = columns.len();
        let mut data = vec![0.0; dim * rank];
        for (l, col) in columns.iter().enumerate() {
            if col.len() != dim {
                return Err(FrameError::ShapeMismatch {
                    dim,
                    rank,
                    len: col.len(),
                });
            }
            for (i, &x) in col.iter().enumerate() {
                data[i * rank + l] = x;
            }
        }
        Self::new(dim, rank, data)
    }

    /// Internal constructor for frames produced by algorithms that guarantee
    /// orthonormality (QR output, zero-padding of an orthonormal frame).
    pub(crate) fn from_parts_unchecked(dim: usize, rank: usize, data: Vec<f64>) -> Self {
        let frame = Self { dim, rank, data };
        debug_assert!(
            frame.ortho_defect() <= ORTHO_TOL,
            "internal frame violates orthonormality: {:.3e}",
            frame.ortho_defect()
        );
        frame
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn rank(&self) -> usize {
        self.rank
    }

    #[inline]
    pub fn get(&self, i: usize, l: usize) -> f64 {
        debug_assert!(i < self.dim && l < self.rank);
        self.data[i * self.rank + l]
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.rank..(i + 1) * self.rank]
    }

    pub fn column(&self, l: usize) -> Vec<f64> {
        (0..self.dim).map(|i| self.get(i, l)).collect()
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// View the frame as a plain matrix.
    pub fn to_matrix(&self) -> DenseMatrix {
        DenseMatrix::from_vec(self.dim, self.rank, self.data.clone())
            .expect("frame data is finite by construction")
    }

    /// `max |Q'Q - I|` over all entries of the rank x rank Gram matrix.
    /// Accumulates row-by-row so memory access stays contiguous even for
    /// wide frames.
    pub fn ortho_defect(&self) -> f64 {
        let r = self.rank;
        // upper triangle of Q'Q, row-major packed
        let mut acc = vec![0.0f64; r * (r + 1) / 2];
        let mut offsets = Vec::with_capacity(r);
        let mut off = 0;
        for a in 0..r {
            offsets.push(off);
            off += r - a;
        }
        for i in 0..self.dim {
            let row = self.row(i);
            for (a, &va) in row.iter().enumerate() {
                if va == 0.0 {
                    continue;
                }
                let base = offsets[a];
                let dst = &mut acc[base..base + (r - a)];
                for (slot, &vb) in dst.iter_mut().zip(&row[a..]) {
                    *slot += va * vb;
                }
            }
        }
        let mut defect = 0.0f64;
        for a in 0..r {
            let base = offsets[a];
            for b in a..r {
                let target = if a == b { 1.0 } else { 0.0 };
                defect = defect.max((acc[base + b - a] - target).abs());
            }
        }
        defect
    }

    /// Indices of rows that are exactly zero in every column.
    pub fn zero_rows(&self) -> Vec<usize> {
        (0..self.dim)
            .filter(|&i| self.row(i).iter().all(|&x| x == 0.0))
            .collect()
    }

    /// Indices of rows with a nonzero entry in column `l`.
    pub fn column_support(&self, l: usize) -> Vec<usize> {
        (0..self.dim).filter(|&i| self.get(i, l) != 0.0).collect()
    }

    /// Indices of rows with a nonzero entry in any column.
    pub fn joint_support(&self) -> Vec<usize> {
        (0..self.dim)
            .filter(|&i| self.row(i).iter().any(|&x| x != 0.0))
            .collect()
    }

    /// `self^T * other` as a `self.rank x other.rank` matrix.
    pub fn gram_with(&self, other: &OrthonormalFrame) -> Result<DenseMatrix, FrameError> {
        if self.dim != other.dim {
            return Err(FrameError::DimensionMismatch {
                a_dim: self.dim,
                a_rank: self.rank,
                b_dim: other.dim,
                b_rank: other.rank,
            });
        }
        let mut out = DenseMatrix::zeros(self.rank, other.rank);
        for i in 0..self.dim {
            let a = self.row(i);
            let b = other.row(i);
            for (l, &av) in a.iter().enumerate() {
                if av == 0.0 {
                    continue;
                }
                let out_row = out.row_mut(l);
                for (m, &bv) in b.iter().enumerate() {
                    out_row[m] += av * bv;
                }
            }
        }
        Ok(out)
    }

    /// Negate column `l` in place. Sign flips preserve orthonormality.
    pub(crate) fn negate_column(&mut self, l: usize) {
        for i in 0..self.dim {
            self.data[i * self.rank + l] = -self.data[i * self.rank + l];
        }
    }

    /// Reorder columns by `perm`, where the new column `l` is the old column
    /// `perm[l]`.
    pub(crate) fn permute_columns(&self, perm: &[usize]) -> OrthonormalFrame {
        debug_assert_eq!(perm.len(), self.rank);
        let mut data = vec![0.0; self.data.len()];
        for i in 0..self.dim {
            let src = self.row(i);
            let dst = &mut data[i * self.rank..(i + 1) * self.rank];
            for (l, &p) in perm.iter().enumerate() {
                dst[l] = src[p];
            }
        }
        OrthonormalFrame {
            dim: self.dim,
            rank: self.rank,
            data,
        }
    }

    /// `self * rot` for an orthonormal `rank x rank` rotation; the product
    /// of orthonormal factors is orthonormal.
    pub(crate) fn rotate(&self, rot: &OrthonormalFrame) -> OrthonormalFrame {
        debug_assert_eq!(rot.dim(), self.rank);
        debug_assert_eq!(rot.rank(), self.rank);
        let r = self.rank;
        let mut data = vec![0.0; self.dim * r];
        for i in 0..self.dim {
            let src = self.row(i);
            let dst = &mut data[i * r..(i + 1) * r];
            for (k, &s) in src.iter().enumerate() {
                if s == 0.0 {
                    continue;
                }
                for (l, &g) in rot.row(k).iter().enumerate() {
                    dst[l] += s * g;
                }
            }
        }
        OrthonormalFrame::from_parts_unchecked(self.dim, r, data)
    }
}

/// The top-`r` singular triples of a matrix.
#[derive(Debug, Clone)]
pub struct ReducedSvd {
    pub left: OrthonormalFrame,
    pub singular_values: Vec<f64>,
    pub right: OrthonormalFrame,
}

impl ReducedSvd {
    pub fn new(
        left: OrthonormalFrame,
        singular_values: Vec<f64>,
        right: OrthonormalFrame,
    ) -> Result<Self, FrameError> {
        for (idx, w) in singular_values.windows(2).enumerate() {
            if w[1] > w[0] {
                return Err(FrameError::BadSingularValues { index: idx + 1 });
            }
        }
        if singular_values.iter().any(|&s| s < 0.0 || !s.is_finite()) {
            return Err(FrameError::BadSingularValues { index: 0 });
        }
        Ok(Self {
            left,
            singular_values,
            right,
        })
    }

    pub fn rank(&self) -> usize {
        self.singular_values.len()
    }

    /// Reconstruct `sum_l d_l u_l v_l'`.
    pub fn reconstruct(&self) -> DenseMatrix {
        let n = self.left.dim();
        let p = self.right.dim();
        let r = self.rank();
        let mut out = DenseMatrix::zeros(n, p);
        for i in 0..n {
            let u_row = self.left.row(i);
            let out_row = out.row_mut(i);
            for j in 0..p {
                let v_row = self.right.row(j);
                let mut s = 0.0;
                for l in 0..r {
                    s += self.singular_values[l] * u_row[l] * v_row[l];
                }
                out_row[j] = s;
            }
        }
        out
    }
}

pub(crate) fn norm2(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}
