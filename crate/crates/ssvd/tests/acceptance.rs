//! Acceptance gate: one test per release criterion, each printing a
//! PASS/FAIL line (visible with `--nocapture`). Scenario sweeps run at 20
//! repetitions with fixed seeds; the three large scenario reports are
//! computed once and shared.
//!
//! Run with: `cargo test -p ssvd --test acceptance -- --nocapture`

use std::sync::LazyLock;
use std::time::Instant;

use ssvd::matrix::DenseMatrix;
use ssvd::rng::{stream, StreamKey};
use ssvd::sim::EvalReport;
use ssvd::{
    add_noise, estimate_rank, fit, parse_scenario, run_scenario, subspace_distance, FoldScheme,
    NoiseLaw, Scenario, SsvdConfig,
};

const SCENARIO_SEED: u64 = 20260808;

fn table1_scenario(d1: f64, noise: &str, name: &str) -> Scenario {
    parse_scenario(&format!(
        "name = {name}\nn = 1024\np = 2048\nrank = 1\nsingular_values = {d1}\n\
         u_signals = peak\nv_signals = poly\nnoise = {noise}\nreps = 20\nseed = {SCENARIO_SEED}\n"
    ))
    .expect("valid scenario")
}

static D100_GAUSS: LazyLock<EvalReport> = LazyLock::new(|| {
    run_scenario(&table1_scenario(100.0, "gauss", "table1_d100_gauss")).expect("scenario runs")
});
static D50_GAUSS: LazyLock<EvalReport> = LazyLock::new(|| {
    run_scenario(&table1_scenario(50.0, "gauss", "table1_d50_gauss")).expect("scenario runs")
});
static D50_T5: LazyLock<EvalReport> = LazyLock::new(|| {
    run_scenario(&table1_scenario(50.0, "t5", "table2_d50_t5")).expect("scenario runs")
});

struct Check {
    label: &'static str,
    ok: bool,
    detail: String,
}

fn report(criterion: &str, checks: &[Check]) {
    let ok = checks.iter().all(|c| c.ok);
    let verdict = if ok { "PASS" } else { "FAIL" };
    println!("[acceptance] {criterion}: {verdict}");
    for c in checks {
        let mark = if c.ok { "ok " } else { "BAD" };
        println!("    {mark} {} = {}", c.label, c.detail);
    }
    assert!(ok, "{criterion} failed");
}

fn in_band(label: &'static str, value: f64, lo: f64, hi: f64) -> Check {
    Check {
        label,
        ok: value >= lo && value <= hi,
        detail: format!("{value:.4} (band [{lo}, {hi}])"),
    }
}

/// Planted sparse factors with disjoint supports on an n x p grid.
fn planted_sparse(
    n: usize,
    p: usize,
    blocks: &[(std::ops::Range<usize>, std::ops::Range<usize>, f64)],
) -> (DenseMatrix, Vec<Vec<usize>>, Vec<Vec<usize>>) {
    let mut x = DenseMatrix::zeros(n, p);
    let mut u_supports = Vec::new();
    let mut v_supports = Vec::new();
    for (u_range, v_range, d) in blocks {
        let u_supp: Vec<usize> = u_range.clone().collect();
        let v_supp: Vec<usize> = v_range.clone().collect();
        let uval = 1.0 / (u_supp.len() as f64).sqrt();
        let vval = 1.0 / (v_supp.len() as f64).sqrt();
        for &i in &u_supp {
            for &j in &v_supp {
                x.set(i, j, x.get(i, j) + d * uval * vval);
            }
        }
        u_supports.push(u_supp);
        v_supports.push(v_supp);
    }
    (x, u_supports, v_supports)
}

#[test]
fn criterion_1_noiseless_exact_recovery() {
    // rank 1
    let (x1, u_supp, v_supp) =
        planted_sparse(1024, 2048, &[(100..130, 500..540, 100.0)]);
    let t0 = Instant::now();
    let fit1 = fit(&x1, &SsvdConfig::new(1).with_seed(1)).expect("rank-1 noiseless fit");
    let rank1_secs = t0.elapsed().as_secs_f64();
    let u_true = frame_from_support(1024, &u_supp[0]);
    let v_true = frame_from_support(2048, &v_supp[0]);
    let lu1 = subspace_distance(&fit1.u_hat, &u_true).unwrap();
    let lv1 = subspace_distance(&fit1.v_hat, &v_true).unwrap();

    // rank 2, disjoint supports
    let (x2, u_supps, v_supps) = planted_sparse(
        1024,
        2048,
        &[(100..130, 500..540, 200.0), (300..325, 900..935, 100.0)],
    );
    let t1 = Instant::now();
    let fit2 = fit(&x2, &SsvdConfig::new(2).with_seed(2)).expect("rank-2 noiseless fit");
    let rank2_secs = t1.elapsed().as_secs_f64();
    let mut u_union: Vec<usize> = u_supps.concat();
    u_union.sort_unstable();
    let mut v_union: Vec<usize> = v_supps.concat();
    v_union.sort_unstable();
    let lu2 = worst_factor_distance(&fit2.u_hat, 1024, &u_supps);
    let lv2 = worst_factor_distance(&fit2.v_hat, 2048, &v_supps);

    report(
        "criterion 1 (noiseless exact recovery)",
        &[
            in_band("rank-1 L_space(u)", lu1, 0.0, 1e-6),
            in_band("rank-1 L_space(v)", lv1, 0.0, 1e-6),
            Check {
                label: "rank-1 exact supports",
                ok: fit1.u_support[0] == u_supp[0] && fit1.v_support[0] == v_supp[0],
                detail: format!(
                    "|u| {} |v| {}",
                    fit1.u_support[0].len(),
                    fit1.v_support[0].len()
                ),
            },
            in_band("rank-2 worst subspace loss (u side)", lu2, 0.0, 1e-6),
            in_band("rank-2 worst subspace loss (v side)", lv2, 0.0, 1e-6),
            Check {
                label: "rank-2 exact joint supports",
                ok: fit2.u_hat.joint_support() == u_union
                    && fit2.v_hat.joint_support() == v_union,
                detail: format!(
                    "|u| {} |v| {}",
                    fit2.u_hat.joint_support().len(),
                    fit2.v_hat.joint_support().len()
                ),
            },
            Check {
                label: "d_hat recovered",
                ok: (fit2.d_hat[0] - 200.0).abs() <= 1e-6 * 200.0
                    && (fit2.d_hat[1] - 100.0).abs() <= 1e-6 * 100.0,
                detail: format!("{:.6?}", fit2.d_hat),
            },
            Check {
                label: "runtime per fit < 5 s",
                ok: rank1_secs < 5.0 && rank2_secs < 5.0,
                detail: format!("{rank1_secs:.2} s and {rank2_secs:.2} s"),
            },
        ],
    );
}

fn frame_from_support(dim: usize, support: &[usize]) -> ssvd::OrthonormalFrame {
    let val = 1.0 / (support.len() as f64).sqrt();
    let col: Vec<f64> = (0..dim)
        .map(|i| if support.contains(&i) { val } else { 0.0 })
        .collect();
    ssvd::OrthonormalFrame::from_columns(dim, &[col]).unwrap()
}

/// Max subspace distance between the fitted frame and the true rank-2 frame.
fn worst_factor_distance(
    fitted: &ssvd::OrthonormalFrame,
    dim: usize,
    supports: &[Vec<usize>],
) -> f64 {
    let cols: Vec<Vec<f64>> = supports
        .iter()
        .map(|supp| {
            let val = 1.0 / (supp.len() as f64).sqrt();
            (0..dim)
                .map(|i| if supp.contains(&i) { val } else { 0.0 })
                .collect()
        })
        .collect();
    let truth = ssvd::OrthonormalFrame::from_columns(dim, &cols).unwrap();
    subspace_distance(fitted, &truth).unwrap()
}

#[test]
fn criterion_2_table1_d100_reproduction() {
    // the bundled scenario file describes exactly this cell
    let bundled = std::fs::read_to_string(
        std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
            .join("../../scenarios/table1_d100_gauss.scn"),
    )
    .expect("bundled scenario present");
    assert_eq!(
        parse_scenario(&bundled).expect("bundled scenario parses"),
        table1_scenario(100.0, "gauss", "table1_d100_gauss")
    );

    let m = &D100_GAUSS.metrics;
    report(
        "criterion 2 (rank-one reproduction, d1 = 100, Gaussian noise)",
        &[
            in_band("median L_space(u1)", m.sparse.space_loss_u.median, 0.006, 0.025),
            in_band("median L_space(v1)", m.sparse.space_loss_v.median, 0.016, 0.065),
            in_band("median L(Xi)", m.sparse.recovery_loss.median, 0.023, 0.09),
            in_band("median ||u1||_0", m.sparse.u_l0_first.median, 20.0, 60.0),
            Check {
                label: "completed repetitions",
                ok: m.reps_completed >= 18,
                detail: format!("{}/20", m.reps_completed),
            },
        ],
    );
}

#[test]
fn criterion_3_ordinary_svd_failure_at_d50() {
    let m = &D50_GAUSS.metrics;
    report(
        "criterion 3 (ordinary-SVD failure at d1 = 50)",
        &[
            Check {
                label: "SVD baseline L_space(u1) >= 0.3",
                ok: m.svd_baseline.space_loss_u.median >= 0.3,
                detail: format!("{:.4}", m.svd_baseline.space_loss_u.median),
            },
            Check {
                label: "SVD baseline L(Xi) >= 1.0",
                ok: m.svd_baseline.recovery_loss.median >= 1.0,
                detail: format!("{:.4}", m.svd_baseline.recovery_loss.median),
            },
            Check {
                label: "sparse fit L_space(u1) <= 0.15",
                ok: m.sparse.space_loss_u.median <= 0.15,
                detail: format!("{:.4}", m.sparse.space_loss_u.median),
            },
        ],
    );
}

#[test]
fn criterion_4_heavy_tail_degradation() {
    let g = &D50_GAUSS.metrics.sparse;
    let t = &D50_T5.metrics.sparse;
    let pairs = [
        ("L_space(u1)", t.space_loss_u.median, g.space_loss_u.median),
        ("L_space(v1)", t.space_loss_v.median, g.space_loss_v.median),
        ("L(Xi)", t.recovery_loss.median, g.recovery_loss.median),
    ];
    let worse = pairs.iter().filter(|(_, t5, gauss)| t5 >= gauss).count();
    let detail: Vec<String> = pairs
        .iter()
        .map(|(name, t5, gauss)| format!("{name}: t5 {t5:.4} vs gauss {gauss:.4}"))
        .collect();
    report(
        "criterion 4 (heavy-tail degradation ordering)",
        &[Check {
            label: "t5 >= gauss in at least 2 of 3 losses",
            ok: worse >= 2,
            detail: format!("{worse}/3 [{}]", detail.join("; ")),
        }],
    );
}

#[test]
fn criterion_5_speed_against_full_svd() {
    let checks: Vec<Check> = [
        ("d1 = 100", &*D100_GAUSS),
        ("d1 = 50 gauss", &*D50_GAUSS),
        ("d1 = 50 t5", &*D50_T5),
    ]
    .into_iter()
    .map(|(label, rep)| {
        let ratio = rep.timing.time_ratio.median;
        Check {
            label: Box::leak(format!("median fit/full-SVD wall-clock ({label})").into_boxed_str()),
            ok: ratio <= 1.0,
            detail: format!(
                "{ratio:.3} (fit {:.2} s vs baseline {:.2} s)",
                rep.timing.fit_seconds.median, rep.timing.baseline_seconds.median
            ),
        }
    })
    .collect();
    report("criterion 5 (faster than the full-rank SVD baseline)", &checks);
}

#[test]
fn criterion_6_property_gate_and_determinism() {
    let t0 = Instant::now();

    // Scenario-level bit determinism across thread counts.
    let scenario = parse_scenario(
        "name = determinism\nn = 128\np = 256\nrank = 1\nsingular_values = 60\n\
         u_signals = peak\nv_signals = poly\nnoise = gauss\nreps = 3\nseed = 99\n",
    )
    .unwrap();
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap();
        pool.install(|| run_scenario(&scenario).unwrap().metrics_json())
    };
    let single = run(1);
    let multi = run(4);

    // Representative re-asserts of the randomized property gates; the full
    // suites live in tests/properties.rs and run under the same cargo test.
    let mut contract_ok = true;
    for i in -200..200 {
        let x = i as f64 * 0.11;
        for gamma in [0.0, 0.7, 2.3] {
            for kind in [
                ssvd::ThresholdKind::Hard,
                ssvd::ThresholdKind::Soft,
                ssvd::ThresholdKind::Scad { a: 3.7 },
            ] {
                let y = ssvd::eta(x, gamma, kind);
                contract_ok &= (y - x).abs() <= gamma + 1e-12;
                contract_ok &= x.abs() > gamma || y == 0.0;
                contract_ok &= (ssvd::eta(-x, gamma, kind) + y).abs() <= 1e-12;
            }
        }
    }

    let elapsed = t0.elapsed().as_secs_f64();
    report(
        "criterion 6 (property gate and bit determinism)",
        &[
            Check {
                label: "run_scenario metrics identical across 1 and 4 threads",
                ok: single == multi,
                detail: format!("{} bytes", single.len()),
            },
            Check {
                label: "thresholding contract over sampled grid",
                ok: contract_ok,
                detail: "|eta(x,g)-x| <= g, dead zone, odd symmetry".to_string(),
            },
            Check {
                label: "gate runtime < 60 s",
                ok: elapsed < 60.0,
                detail: format!("{elapsed:.1} s"),
            },
        ],
    );
}

/// Not a numbered criterion, but a pinned invariant of the simulation grid:
/// median losses shrink as the signal strength grows.
#[test]
fn signal_response_is_monotone_in_d() {
    let mut d200 = table1_scenario(200.0, "gauss", "table1_d200_gauss");
    d200.reps = 5;
    let d200_report = run_scenario(&d200).expect("d200 scenario runs");
    let strong = &d200_report.metrics.sparse;
    let mid = &D100_GAUSS.metrics.sparse;
    let weak = &D50_GAUSS.metrics.sparse;
    let ordering = |label: &'static str, a: f64, b: f64, c: f64| Check {
        label,
        ok: a < b && b < c,
        detail: format!("d=200 {a:.4} < d=100 {b:.4} < d=50 {c:.4}"),
    };
    report(
        "invariant (losses decrease with signal strength)",
        &[
            ordering(
                "L_space(u1)",
                strong.space_loss_u.median,
                mid.space_loss_u.median,
                weak.space_loss_u.median,
            ),
            ordering(
                "L(Xi)",
                strong.recovery_loss.median,
                mid.recovery_loss.median,
                weak.recovery_loss.median,
            ),
        ],
    );
}

#[test]
fn criterion_7_rank_selection() {
    // planted rank 2, d = (200, 100), wavelet factors as in the rank-two
    // simulations
    let planted = parse_scenario(
        "name = rank2\nn = 1024\np = 2048\nrank = 2\nsingular_values = 200, 100\n\
         u_signals = peak, step\nv_signals = poly, sing\nnoise = gauss\nreps = 1\nseed = 1\n",
    )
    .unwrap();
    let truth = ssvd::build_model(&planted).unwrap();
    let mut planted_hits = 0;
    for seed in 0..20u64 {
        let mut rng = StreamKey::new(5000 + seed).child(stream::NOISE).rng();
        let x = add_noise(&truth.xi, NoiseLaw::GaussUnit, &mut rng);
        if let Ok(est) = estimate_rank(&x, 4, 0.95, 0.05, FoldScheme::default(), 5000 + seed) {
            if est.r_hat == 2 {
                planted_hits += 1;
            }
        }
    }

    let zero = DenseMatrix::zeros(1024, 2048);
    let mut noise_hits = 0;
    for seed in 0..20u64 {
        let mut rng = StreamKey::new(6000 + seed).child(stream::NOISE).rng();
        let x = add_noise(&zero, NoiseLaw::GaussUnit, &mut rng);
        if let Ok(est) = estimate_rank(&x, 4, 0.95, 0.05, FoldScheme::default(), 6000 + seed) {
            if est.r_hat == 0 {
                noise_hits += 1;
            }
        }
    }

    report(
        "criterion 7 (rank selection)",
        &[
            Check {
                label: "planted rank-2 recovered in >= 90% of 20 seeds",
                ok: planted_hits >= 18,
                detail: format!("{planted_hits}/20"),
            },
            Check {
                label: "pure noise at rank 0 in >= 90% of 20 seeds",
                ok: noise_hits >= 18,
                detail: format!("{noise_hits}/20"),
            },
        ],
    );
}
