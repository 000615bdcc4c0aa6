//! Cross-checks of the production kernels against independent oracles and
//! direct Monte-Carlo simulation.

mod common;

use rand::Rng;
use rand_distr::StandardNormal;

use common::{gram_schmidt, jacobi_eigen, max_abs_diff, projector_distance_oracle};
use ssvd::matrix::DenseMatrix;
use ssvd::rng::{stream, StreamKey};
use ssvd::threshold::LevelMethod;
use ssvd::{
    estimate_rank, estimate_sigma, initialize, qr_orthonormalize, reduced_svd, screen_axis,
    subspace_distance, threshold_levels, vanilla_subspace_iteration, FoldScheme, InitError,
    NoiseScale, OrthonormalFrame,
};

fn gaussian_matrix(rows: usize, cols: usize, seed: u64) -> DenseMatrix {
    let mut rng = StreamKey::new(seed).rng();
    let data = (0..rows * cols)
        .map(|_| rng.sample::<f64, _>(StandardNormal))
        .collect();
    DenseMatrix::from_vec(rows, cols, data).unwrap()
}

#[test]
fn qr_matches_gram_schmidt_oracle() {
    let m = DenseMatrix::from_rows(vec![vec![1.0, 1.0], vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
    let (q, r) = qr_orthonormalize(&m).unwrap();
    let oracle = gram_schmidt(&[m.column(0), m.column(1)]);
    // spans agree: the QR basis and the Gram-Schmidt basis differ at most
    // by column signs for a full-rank input in this construction
    for (l, oracle_col) in oracle.iter().enumerate() {
        let q_col = q.column(l);
        let direct = max_abs_diff(&q_col, oracle_col);
        let flipped: Vec<f64> = oracle_col.iter().map(|x| -x).collect();
        let sign_flipped = max_abs_diff(&q_col, &flipped);
        assert!(direct.min(sign_flipped) <= 1e-10);
    }
    // reconstruction
    let rec = q.to_matrix().matmul(&r).unwrap();
    assert!(rec.sub(&m).unwrap().max_abs() <= 1e-10);
}

#[test]
fn reduced_svd_matches_jacobi_gram_oracle() {
    let m = gaussian_matrix(8, 6, 42);
    let svd = reduced_svd(&m, 3).unwrap();
    let (lambda, _) = jacobi_eigen(&m.gram_cols());
    for l in 0..3 {
        let sigma_oracle = lambda[l].max(0.0).sqrt();
        assert!(
            (svd.singular_values[l] - sigma_oracle).abs() <= 1e-8,
            "sigma_{l}: {} vs oracle {}",
            svd.singular_values[l],
            sigma_oracle
        );
    }
}

#[test]
fn full_rank_reconstruction_and_monotone_residuals() {
    let m = gaussian_matrix(10, 7, 3);
    let mut last = f64::INFINITY;
    for r in 1..=7 {
        let svd = reduced_svd(&m, r).unwrap();
        let err = svd.reconstruct().sub(&m).unwrap().frobenius_norm();
        assert!(err <= last + 1e-12, "residual must not grow with rank");
        last = err;
    }
    assert!(last <= 1e-8 * m.frobenius_norm());
}

#[test]
fn reduced_svd_scale_invariance() {
    let m = gaussian_matrix(9, 5, 8);
    let base = reduced_svd(&m, 3).unwrap();
    let scaled = reduced_svd(&m.scaled(2.5), 3).unwrap();
    for l in 0..3 {
        assert!(
            (scaled.singular_values[l] - 2.5 * base.singular_values[l]).abs()
                <= 1e-10 * base.singular_values[0]
        );
        assert!(max_abs_diff(&scaled.right.column(l), &base.right.column(l)) <= 1e-8);
    }
}

#[test]
fn subspace_distance_matches_projector_oracle() {
    let s = 1.0 / 2.0f64.sqrt();
    let a = OrthonormalFrame::from_columns(3, &[vec![1.0, 0.0, 0.0]]).unwrap();
    let b = OrthonormalFrame::from_columns(3, &[vec![s, s, 0.0]]).unwrap();
    let fast = subspace_distance(&a, &b).unwrap();
    let oracle = projector_distance_oracle(&a, &b);
    assert!((fast - 0.5).abs() <= 1e-12);
    assert!((fast - oracle).abs() <= 1e-6, "fast {fast} oracle {oracle}");

    // random equal-rank frames
    let qa = {
        let m = gaussian_matrix(12, 3, 100);
        qr_orthonormalize(&m).unwrap().0
    };
    let qb = {
        let m = gaussian_matrix(12, 3, 200);
        qr_orthonormalize(&m).unwrap().0
    };
    let fast = subspace_distance(&qa, &qb).unwrap();
    let oracle = projector_distance_oracle(&qa, &qb);
    assert!((fast - oracle).abs() <= 1e-6, "fast {fast} oracle {oracle}");
}

#[test]
fn sigma_hat_is_consistent_for_gaussian_noise() {
    let x = gaussian_matrix(200, 200, 5);
    let sigma = estimate_sigma(&x);
    assert!(
        sigma.value() > 0.9 && sigma.value() < 1.1,
        "sigma {}",
        sigma.value()
    );
    // tighter band at larger sample sizes
    let x = gaussian_matrix(400, 300, 6);
    let sigma = estimate_sigma(&x);
    assert!(sigma.value() > 0.97 && sigma.value() < 1.03);
}

#[test]
fn null_screening_respects_familywise_error() {
    // Under the null, the family-wise error target is alpha = 0.05; allow
    // Monte-Carlo slack over 50 fixed seeds plus the z-approximation error
    // of the Huberized sums.
    let mut seeds_with_selection = 0;
    for seed in 0..50u64 {
        let x = gaussian_matrix(200, 300, 900 + seed);
        let screen = screen_axis(&x, 0.95, 0.05).unwrap();
        if !screen.selected.is_empty() {
            seeds_with_selection += 1;
        }
        assert!(
            screen.selected.len() <= 2,
            "seed {seed} selected {:?}",
            screen.selected
        );
    }
    assert!(
        seeds_with_selection <= 7,
        "{seeds_with_selection}/50 null seeds produced selections"
    );
}

#[test]
fn planted_rows_are_screened_in() {
    // rows 0..10 shifted by +5 per entry (5 sigma): selection must cover them
    let mut x = gaussian_matrix(120, 200, 77);
    for i in 0..10 {
        for j in 0..200 {
            x.set(i, j, x.get(i, j) + 5.0);
        }
    }
    let screen = screen_axis(&x, 0.95, 0.05).unwrap();
    for i in 0..10 {
        assert!(screen.selected.contains(&i), "row {i} missing");
    }
}

#[test]
fn initialize_lands_near_truth_in_planted_model() {
    // planted sparse rank-1 with strong signal and unit noise
    let n = 200;
    let p = 300;
    let u_supp: Vec<usize> = (20..50).collect();
    let v_supp: Vec<usize> = (100..140).collect();
    let uval = 1.0 / (u_supp.len() as f64).sqrt();
    let vval = 1.0 / (v_supp.len() as f64).sqrt();
    let d = 120.0;
    let mut x = gaussian_matrix(n, p, 13);
    for &i in &u_supp {
        for &j in &v_supp {
            x.set(i, j, x.get(i, j) + d * uval * vval);
        }
    }
    let init = initialize(&x, 1, 0.95, 0.05).unwrap();
    for &i in &init.selection.rows {
        assert!(u_supp.contains(&i), "selected row {i} outside support");
    }
    let u_true = OrthonormalFrame::from_columns(
        n,
        &[(0..n)
            .map(|i| if u_supp.contains(&i) { uval } else { 0.0 })
            .collect::<Vec<_>>()],
    )
    .unwrap();
    let dist = subspace_distance(&init.u0, &u_true).unwrap();
    assert!(dist < 0.1, "initialization distance {dist}");
}

#[test]
fn pure_noise_initialization_is_insufficient() {
    let x = gaussian_matrix(200, 300, 2024);
    match initialize(&x, 1, 0.95, 0.05) {
        Err(InitError::InsufficientSelection { .. }) => {}
        other => panic!("expected InsufficientSelection, got {other:?}"),
    }
}

#[test]
fn bootstrap_levels_match_monte_carlo_oracle() {
    // Null data; frames with |H_u| = |H_v| = 50 of n = 1024, p = 2048.
    // The bootstrap level should land near E || Z v ||_inf for fresh
    // N(0,1) matrices Z, computed here by direct simulation.
    let n = 1024;
    let p = 2048;
    let hv = 50;
    let x = gaussian_matrix(n, p, 31);
    let unit = (1.0f64 / hv as f64).sqrt();
    let u_col: Vec<f64> = (0..n).map(|i| if i < hv { unit } else { 0.0 }).collect();
    let v_col: Vec<f64> = (0..p).map(|j| if j < hv { unit } else { 0.0 }).collect();
    let u = OrthonormalFrame::from_columns(n, &[u_col]).unwrap();
    let v = OrthonormalFrame::from_columns(p, &[v_col]).unwrap();
    let levels = threshold_levels(
        &x,
        &u,
        &v,
        &NoiseScale::new(1.0),
        100,
        StreamKey::new(4).child(stream::BOOTSTRAP),
    )
    .unwrap();
    assert_eq!(levels.method, LevelMethod::Bootstrap);

    // Oracle: mean sup-norm of Z w over fresh Gaussian matrices, where w is
    // the unit vector v restricted to its support.
    let mut rng = StreamKey::new(555).rng();
    let draws = 300;
    let mut total = 0.0;
    for _ in 0..draws {
        let mut max_abs = 0.0f64;
        for _ in 0..n {
            let mut s = 0.0;
            for _ in 0..hv {
                s += rng.sample::<f64, _>(StandardNormal) * unit;
            }
            max_abs = max_abs.max(s.abs());
        }
        total += max_abs;
    }
    let oracle = total / draws as f64;
    let rel = (levels.gamma[0] - oracle).abs() / oracle;
    assert!(
        rel <= 0.15,
        "bootstrap level {} vs oracle {oracle} (rel {rel:.3})",
        levels.gamma[0]
    );
}

#[test]
fn vanilla_agrees_with_reduced_svd_on_random_matrices() {
    let x = gaussian_matrix(50, 70, 21);
    let direct = reduced_svd(&x, 3).unwrap();
    let mut rng = StreamKey::new(9).child(stream::VANILLA_START).rng();
    let v0 = ssvd::linalg::random_orthonormal_frame(70, 3, &mut rng).unwrap();
    let iterated = vanilla_subspace_iteration(&x, 3, &v0, 1e-12, 2000).unwrap();
    let du = subspace_distance(&direct.left, &iterated.left).unwrap();
    let dv = subspace_distance(&direct.right, &iterated.right).unwrap();
    assert!(du <= 1e-6 && dv <= 1e-6, "du {du} dv {dv}");
    for l in 0..3 {
        assert!(
            (direct.singular_values[l] - iterated.singular_values[l]).abs()
                <= 1e-8 * direct.singular_values[0]
        );
    }
}

#[test]
fn rank_one_scenario_rank_estimate_is_consistent() {
    // Planted single-factor model at moderate signal: the estimated rank
    // should be 1 in at least 90% of 20 seeded repetitions.
    let scenario = ssvd::parse_scenario(
        "name = r1\nn = 1024\np = 2048\nrank = 1\nsingular_values = 100\n\
         u_signals = peak\nv_signals = poly\nnoise = gauss\nreps = 1\nseed = 1\n",
    )
    .unwrap();
    let truth = ssvd::build_model(&scenario).unwrap();
    let mut hits = 0;
    for seed in 0..20u64 {
        let mut rng = StreamKey::new(3000 + seed).child(stream::NOISE).rng();
        let x = ssvd::add_noise(&truth.xi, ssvd::NoiseLaw::GaussUnit, &mut rng);
        if let Ok(est) = estimate_rank(&x, 3, 0.95, 0.05, FoldScheme::default(), 3000 + seed) {
            if est.r_hat == 1 {
                hits += 1;
            }
        }
    }
    assert!(hits >= 18, "rank-1 recovered in only {hits}/20 repetitions");
}
