//! Independent oracles for cross-checking the production kernels. These
//! deliberately use different algorithms than the library (cyclic Jacobi
//! instead of tridiagonal QL, classical Gram-Schmidt instead of Householder,
//! power iteration on explicit projector differences instead of the small
//! Gram identity).

use ssvd::matrix::DenseMatrix;
use ssvd::OrthonormalFrame;

/// Cyclic Jacobi eigensolver for small symmetric matrices. Returns
/// eigenvalues sorted descending with matching eigenvectors as rows.
pub fn jacobi_eigen(a: &DenseMatrix) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = a.rows();
    assert_eq!(n, a.cols());
    let mut m: Vec<Vec<f64>> = (0..n).map(|i| a.row(i).to_vec()).collect();
    let mut vecs: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut row = vec![0.0; n];
            row[i] = 1.0;
            row
        })
        .collect();
    for _sweep in 0..100 {
        let mut off = 0.0f64;
        for i in 0..n {
            for j in i + 1..n {
                off = off.max(m[i][j].abs());
            }
        }
        if off < 1e-14 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if m[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (m[q][q] - m[p][p]) / (2.0 * m[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[k][p];
                    let mkq = m[k][q];
                    m[k][p] = c * mkp - s * mkq;
                    m[k][q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[p][k];
                    let mqk = m[q][k];
                    m[p][k] = c * mpk - s * mqk;
                    m[q][k] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vpk = vecs[p][k];
                    let vqk = vecs[q][k];
                    vecs[p][k] = c * vpk - s * vqk;
                    vecs[q][k] = s * vpk + c * vqk;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[j][j].partial_cmp(&m[i][i]).unwrap());
    let values = order.iter().map(|&i| m[i][i]).collect();
    let vectors = order.iter().map(|&i| vecs[i].clone()).collect();
    (values, vectors)
}

/// Classical Gram-Schmidt, as the naive QR oracle.
pub fn gram_schmidt(columns: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(columns.len());
    for col in columns {
        let mut w = col.clone();
        for q in &out {
            let c: f64 = q.iter().zip(&w).map(|(a, b)| a * b).sum();
            for (wi, qi) in w.iter_mut().zip(q) {
                *wi -= c * qi;
            }
        }
        let norm: f64 = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!(norm > 1e-12, "gram_schmidt oracle given dependent columns");
        for wi in &mut w {
            *wi /= norm;
        }
        out.push(w);
    }
    out
}

/// Spectral norm by power iteration on an explicit symmetric matrix.
pub fn spectral_norm_power(m: &DenseMatrix, iters: usize) -> f64 {
    let n = m.rows();
    let mut v: Vec<f64> = (0..n).map(|i| 1.0 / ((i + 1) as f64)).collect();
    let mut lambda = 0.0;
    for _ in 0..iters {
        let mut w = vec![0.0; n];
        for i in 0..n {
            let row = m.row(i);
            w[i] = row.iter().zip(&v).map(|(a, b)| a * b).sum();
        }
        lambda = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if lambda == 0.0 {
            return 0.0;
        }
        for (wi, slot) in w.iter().zip(v.iter_mut()) {
            *slot = wi / lambda;
        }
    }
    lambda
}

/// `||P_a - P_b||_2^2` via the explicit ambient projectors; the direct
/// (quadratically slower) route to the subspace distance.
pub fn projector_distance_oracle(a: &OrthonormalFrame, b: &OrthonormalFrame) -> f64 {
    let n = a.dim();
    let mut diff = DenseMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let mut pa = 0.0;
            let mut pb = 0.0;
            for l in 0..a.rank() {
                pa += a.get(i, l) * a.get(j, l);
            }
            for l in 0..b.rank() {
                pb += b.get(i, l) * b.get(j, l);
            }
            diff.set(i, j, pa - pb);
        }
    }
    let norm = spectral_norm_power(&diff, 2000);
    norm * norm
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}
