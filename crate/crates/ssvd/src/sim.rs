//! Model assembly, noise generation, loss evaluation, and scenario runs.

use std::time::Instant;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{StandardNormal, StudentT};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fit::fit;
use crate::frame::{FrameError, OrthonormalFrame, ReducedSvd};
use crate::linalg::{reduced_svd, subspace_distance, LinalgError};
use crate::matrix::{DenseMatrix, MatrixError};
use crate::rng::{stream, StreamKey};
use crate::robust::{mad, median, MAD_NORMAL_FACTOR};
use crate::scenario::{NoiseLaw, Scenario, ScenarioError};
use crate::signal::{make_test_signal, SignalError};
use crate::wavelet::{default_levels, dwt_symmlet8, WaveletError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Signal(#[from] SignalError),
    #[error(transparent)]
    Wavelet(#[from] WaveletError),
    #[error(transparent)]
    Frame(#[from] FrameError),
    #[error(transparent)]
    Matrix(#[from] MatrixError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("shapes do not conform: {0}")]
    DimensionMismatch(String),
    #[error("all {reps} repetitions failed; first error: {first}")]
    AllRepsFailed { reps: usize, first: String },
}

/// The planted low-rank model for one scenario.
#[derive(Debug, Clone)]
pub struct ModelTruth {
    pub xi: DenseMatrix,
    pub u_true: OrthonormalFrame,
    pub v_true: OrthonormalFrame,
    pub d: Vec<f64>,
    pub xi_sq_norm: f64,
}

/// Build the signal matrix from normalized wavelet-coefficient factors.
///
/// Factors of rank >= 2 are Gram-Schmidt orthogonalized so the planted `d`
/// are exact singular values of `xi`.
pub fn build_model(scenario: &Scenario) -> Result<ModelTruth, SimError> {
    scenario.validate()?;
    let u_cols = factor_columns(&scenario.u_kinds()?, scenario.n)?;
    let v_cols = factor_columns(&scenario.v_kinds()?, scenario.p)?;
    let u_true = OrthonormalFrame::from_columns(scenario.n, &u_cols)?;
    let v_true = OrthonormalFrame::from_columns(scenario.p, &v_cols)?;

    let r = scenario.rank;
    let d = scenario.singular_values.clone();
    let mut xi = DenseMatrix::zeros(scenario.n, scenario.p);
    let p = scenario.p;
    xi.as_mut_slice()
        .par_chunks_mut(p)
        .enumerate()
        .for_each(|(i, row)| {
            for l in 0..r {
                let coef = d[l] * u_true.get(i, l);
                if coef == 0.0 {
                    continue;
                }
                for (j, out) in row.iter_mut().enumerate() {
                    *out += coef * v_true.get(j, l);
                }
            }
        });
    let xi_sq_norm = xi.as_slice().iter().map(|x| x * x).sum();
    Ok(ModelTruth {
        xi,
        u_true,
        v_true,
        d,
        xi_sq_norm,
    })
}

fn factor_columns(
    kinds: &[crate::signal::SignalKind],
    len: usize,
) -> Result<Vec<Vec<f64>>, SimError> {
    let mut cols = Vec::with_capacity(kinds.len());
    for &kind in kinds {
        let sig = make_test_signal(kind, len)?;
        let mut wc = dwt_symmlet8(&sig.values, default_levels(len))?;
        let norm = wc.iter().map(|x| x * x).sum::<f64>().sqrt();
        for x in &mut wc {
            *x /= norm;
        }
        cols.push(wc);
    }
    // Orthogonalize across columns; two passes pin the defect to rounding.
    for _ in 0..2 {
        for l in 0..cols.len() {
            for m in 0..l {
                let c: f64 = cols[m].iter().zip(&cols[l]).map(|(a, b)| a * b).sum();
                let (head, tail) = cols.split_at_mut(l);
                for (x, y) in tail[0].iter_mut().zip(&head[m]) {
                    *x -= c * y;
                }
            }
            let norm = cols[l].iter().map(|x| x * x).sum::<f64>().sqrt();
            for x in &mut cols[l] {
                *x /= norm;
            }
        }
    }
    Ok(cols)
}

/// `xi + Z` with iid entries drawn row-major from `rng`.
pub fn add_noise(xi: &DenseMatrix, law: NoiseLaw, rng: &mut ChaCha8Rng) -> DenseMatrix {
    let mut out = xi.clone();
    match law {
        NoiseLaw::GaussUnit => {
            for x in out.as_mut_slice() {
                *x += rng.sample::<f64, _>(StandardNormal);
            }
        }
        NoiseLaw::T5Scaled => {
            // sqrt(3/5) * t_5 has unit variance: Var(t_5) = 5/3.
            let t5 = StudentT::new(5.0).expect("5 degrees of freedom is valid");
            let scale = (3.0f64 / 5.0).sqrt();
            for x in out.as_mut_slice() {
                *x += scale * rng.sample::<f64, _>(t5);
            }
        }
    }
    out
}

/// Per-repetition losses and sparsity counts for one method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepMetrics {
    pub space_loss_u: f64,
    pub space_loss_v: f64,
    pub recovery_loss: f64,
    pub u_l0: Vec<usize>,
    pub v_l0: Vec<usize>,
    pub u_joint_support: usize,
    pub v_joint_support: usize,
    pub time_ratio: f64,
}

/// The deterministic part of [`RepMetrics`]: everything except the
/// wall-clock ratio, which belongs in the timing section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepLosses {
    pub space_loss_u: f64,
    pub space_loss_v: f64,
    pub recovery_loss: f64,
    pub u_l0: Vec<usize>,
    pub v_l0: Vec<usize>,
    pub u_joint_support: usize,
    pub v_joint_support: usize,
}

impl From<&RepMetrics> for RepLosses {
    fn from(m: &RepMetrics) -> Self {
        Self {
            space_loss_u: m.space_loss_u,
            space_loss_v: m.space_loss_v,
            recovery_loss: m.recovery_loss,
            u_l0: m.u_l0.clone(),
            v_l0: m.v_l0.clone(),
            u_joint_support: m.u_joint_support,
            v_joint_support: m.v_joint_support,
        }
    }
}

/// Evaluate estimated triples against the truth.
///
/// `space_loss` is the squared spectral norm of the projector difference,
/// `recovery_loss` is `||Uhat D Vhat' - Xi||_F^2 / ||Xi||_F^2`, and the l0
/// fields count exact nonzeros.
pub fn evaluate(
    u_hat: &OrthonormalFrame,
    v_hat: &OrthonormalFrame,
    d_hat: &[f64],
    truth: &ModelTruth,
    fit_seconds: f64,
    baseline_seconds: f64,
) -> Result<RepMetrics, SimError> {
    if u_hat.dim() != truth.u_true.dim() || v_hat.dim() != truth.v_true.dim() {
        return Err(SimError::DimensionMismatch(format!(
            "estimate is {}x{}, truth is {}x{}",
            u_hat.dim(),
            v_hat.dim(),
            truth.u_true.dim(),
            truth.v_true.dim()
        )));
    }
    let space_loss_u = subspace_distance(u_hat, &truth.u_true)?;
    let space_loss_v = subspace_distance(v_hat, &truth.v_true)?;

    let r = d_hat.len();
    let p = truth.xi.cols();
    // Residual row sums are collected per row and reduced sequentially so
    // the result does not depend on the parallel split.
    let mut row_sq = vec![0.0f64; truth.xi.rows()];
    row_sq
        .par_iter_mut()
        .enumerate()
        .for_each(|(i, out)| {
            let xi_row = truth.xi.row(i);
            let u_row = u_hat.row(i);
            let mut acc = 0.0;
            for j in 0..p {
                let v_row = v_hat.row(j);
                let mut pred = 0.0;
                for l in 0..r {
                    pred += d_hat[l] * u_row[l] * v_row[l];
                }
                let diff = pred - xi_row[j];
                acc += diff * diff;
            }
            *out = acc;
        });
    let recovery_loss = row_sq.iter().sum::<f64>() / truth.xi_sq_norm;

    let u_l0: Vec<usize> = (0..u_hat.rank())
        .map(|l| u_hat.column_support(l).len())
        .collect();
    let v_l0: Vec<usize> = (0..v_hat.rank())
        .map(|l| v_hat.column_support(l).len())
        .collect();
    Ok(RepMetrics {
        space_loss_u,
        space_loss_v,
        recovery_loss,
        u_joint_support: u_hat.joint_support().len(),
        v_joint_support: v_hat.joint_support().len(),
        u_l0,
        v_l0,
        time_ratio: fit_seconds / baseline_seconds,
    })
}

/// Median plus MAD-based spreads of one metric across repetitions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub median: f64,
    /// Raw median absolute deviation.
    pub mad: f64,
    /// 1.4826 * MAD, the normal-consistent scale.
    pub mad_scaled: f64,
    /// 1.4826 * MAD / sqrt(reps), the MAD-based standard error of a summary.
    pub mad_se: f64,
}

fn summarize(values: &[f64]) -> MetricSummary {
    let med = median(values).expect("nonempty metric vector");
    let m = mad(values).expect("nonempty metric vector");
    MetricSummary {
        median: med,
        mad: m,
        mad_scaled: MAD_NORMAL_FACTOR * m,
        mad_se: MAD_NORMAL_FACTOR * m / (values.len() as f64).sqrt(),
    }
}

/// Summaries for one method (deterministic part; no wall-clock numbers).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodReport {
    pub space_loss_u: MetricSummary,
    pub space_loss_v: MetricSummary,
    pub recovery_loss: MetricSummary,
    /// ||u_1||_0 and ||v_1||_0 across reps (leading column).
    pub u_l0_first: MetricSummary,
    pub v_l0_first: MetricSummary,
    pub u_joint_support: MetricSummary,
    pub v_joint_support: MetricSummary,
}

/// Scenario echo plus per-rep records, everything reproducible bit-for-bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsSection {
    pub scenario: Scenario,
    pub reps_completed: usize,
    pub reps_failed: usize,
    pub failures: Vec<String>,
    pub sparse: MethodReport,
    pub svd_baseline: MethodReport,
    pub sparse_per_rep: Vec<Option<RepLosses>>,
    pub svd_per_rep: Vec<RepLosses>,
    pub iterations: MetricSummary,
}

/// Wall-clock timings; separated from the metrics so the metrics document
/// is identical across runs and thread counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingSection {
    pub fit_seconds: MetricSummary,
    pub baseline_seconds: MetricSummary,
    /// fit wall-clock over full-rank SVD wall-clock, per rep.
    pub time_ratio: MetricSummary,
    pub fit_seconds_per_rep: Vec<f64>,
    pub baseline_seconds_per_rep: Vec<f64>,
    pub time_ratio_per_rep: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub metrics: MetricsSection,
    pub timing: TimingSection,
}

impl EvalReport {
    /// Deterministic JSON (metrics only).
    pub fn metrics_json(&self) -> String {
        serde_json::to_string_pretty(&self.metrics).expect("metrics serialize")
    }

    pub fn timing_json(&self) -> String {
        serde_json::to_string_pretty(&self.timing).expect("timing serialize")
    }
}

struct RepOutcome {
    sparse: Result<(RepMetrics, usize), String>,
    svd: RepMetrics,
    fit_seconds: f64,
    baseline_seconds: f64,
}

/// Run every repetition of a scenario: plant the model, add seeded noise,
/// fit the sparse estimator, time the full-rank SVD baseline, and evaluate
/// both against the truth. The ordinary-SVD comparison column is the rank-r
/// truncation of that timed full SVD. A failed repetition is recorded and
/// skipped in the aggregates, not fatal.
pub fn run_scenario(scenario: &Scenario) -> Result<EvalReport, SimError> {
    let truth = build_model(scenario)?;
    let key = StreamKey::new(scenario.seed);
    let full_rank = scenario.n.min(scenario.p);

    let outcomes: Vec<Result<RepOutcome, String>> = (0..scenario.reps)
        .into_par_iter()
        .map(|rep| {
            let mut noise_rng = key.child(stream::NOISE).child(rep as u64).rng();
            let x = add_noise(&truth.xi, scenario.noise, &mut noise_rng);

            let t0 = Instant::now();
            let fit_result = fit(&x, &scenario.fit_config(rep));
            let fit_seconds = t0.elapsed().as_secs_f64();

            let t1 = Instant::now();
            let full = reduced_svd(&x, full_rank).map_err(|e| format!("rep {rep}: {e}"))?;
            let baseline_seconds = t1.elapsed().as_secs_f64();

            let svd_est = truncate_svd(&full, scenario.rank);
            let svd = evaluate(
                &svd_est.left,
                &svd_est.right,
                &svd_est.singular_values,
                &truth,
                baseline_seconds,
                baseline_seconds,
            )
            .map_err(|e| format!("rep {rep}: {e}"))?;

            let sparse = match fit_result {
                Ok(f) => evaluate(
                    &f.u_hat,
                    &f.v_hat,
                    &f.d_hat,
                    &truth,
                    fit_seconds,
                    baseline_seconds,
                )
                .map(|m| (m, f.iterations))
                .map_err(|e| e.to_string()),
                Err(e) => Err(e.to_string()),
            };
            Ok(RepOutcome {
                sparse,
                svd,
                fit_seconds,
                baseline_seconds,
            })
        })
        .collect();

    let mut failures = Vec::new();
    let mut sparse_metrics: Vec<Option<RepMetrics>> = Vec::with_capacity(scenario.reps);
    let mut svd_metrics: Vec<RepMetrics> = Vec::new();
    let mut iterations = Vec::new();
    let mut fit_seconds_per_rep = Vec::new();
    let mut baseline_seconds_per_rep = Vec::new();
    for (rep, outcome) in outcomes.into_iter().enumerate() {
        match outcome {
            Err(msg) => {
                failures.push(msg);
                sparse_metrics.push(None);
            }
            Ok(o) => {
                svd_metrics.push(o.svd);
                fit_seconds_per_rep.push(o.fit_seconds);
                baseline_seconds_per_rep.push(o.baseline_seconds);
                match o.sparse {
                    Ok((m, iters)) => {
                        sparse_metrics.push(Some(m));
                        iterations.push(iters as f64);
                    }
                    Err(msg) => {
                        failures.push(format!("rep {rep}: {msg}"));
                        sparse_metrics.push(None);
                    }
                }
            }
        }
    }

    let sparse_ok: Vec<&RepMetrics> = sparse_metrics.iter().flatten().collect();
    if sparse_ok.is_empty() || svd_metrics.is_empty() {
        return Err(SimError::AllRepsFailed {
            reps: scenario.reps,
            first: failures.first().cloned().unwrap_or_default(),
        });
    }

    let reps_completed = sparse_ok.len();
    let reps_failed = scenario.reps - reps_completed;
    let sparse_report = method_report(&sparse_ok);
    let ratios: Vec<f64> = sparse_ok.iter().map(|m| m.time_ratio).collect();
    let svd_refs: Vec<&RepMetrics> = svd_metrics.iter().collect();
    let svd_report = method_report(&svd_refs);

    let sparse_per_rep: Vec<Option<RepLosses>> = sparse_metrics
        .iter()
        .map(|m| m.as_ref().map(RepLosses::from))
        .collect();
    let svd_per_rep: Vec<RepLosses> = svd_metrics.iter().map(RepLosses::from).collect();

    Ok(EvalReport {
        metrics: MetricsSection {
            scenario: scenario.clone(),
            reps_completed,
            reps_failed,
            failures,
            sparse: sparse_report,
            svd_baseline: svd_report,
            sparse_per_rep,
            svd_per_rep,
            iterations: summarize(&iterations),
        },
        timing: TimingSection {
            fit_seconds: summarize(&fit_seconds_per_rep),
            baseline_seconds: summarize(&baseline_seconds_per_rep),
            time_ratio: summarize(&ratios),
            fit_seconds_per_rep,
            baseline_seconds_per_rep,
            time_ratio_per_rep: ratios,
        },
    })
}

fn method_report(reps: &[&RepMetrics]) -> MethodReport {
    let grab = |f: &dyn Fn(&RepMetrics) -> f64| -> Vec<f64> {
        reps.iter().map(|m| f(m)).collect()
    };
    MethodReport {
        space_loss_u: summarize(&grab(&|m| m.space_loss_u)),
        space_loss_v: summarize(&grab(&|m| m.space_loss_v)),
        recovery_loss: summarize(&grab(&|m| m.recovery_loss)),
        u_l0_first: summarize(&grab(&|m| m.u_l0[0] as f64)),
        v_l0_first: summarize(&grab(&|m| m.v_l0[0] as f64)),
        u_joint_support: summarize(&grab(&|m| m.u_joint_support as f64)),
        v_joint_support: summarize(&grab(&|m| m.v_joint_support as f64)),
    }
}

/// Leading-`r` part of a decomposition; the per-column sign convention is
/// unaffected by dropping trailing columns.
pub fn truncate_svd(full: &ReducedSvd, r: usize) -> ReducedSvd {
    assert!(r >= 1 && r <= full.rank());
    let u_cols: Vec<Vec<f64>> = (0..r).map(|l| full.left.column(l)).collect();
    let v_cols: Vec<Vec<f64>> = (0..r).map(|l| full.right.column(l)).collect();
    let left = OrthonormalFrame::from_columns(full.left.dim(), &u_cols)
        .expect("columns of an orthonormal frame stay orthonormal");
    let right = OrthonormalFrame::from_columns(full.right.dim(), &v_cols)
        .expect("columns of an orthonormal frame stay orthonormal");
    ReducedSvd::new(left, full.singular_values[..r].to_vec(), right)
        .expect("sorted prefix stays sorted")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::parse_scenario;

    fn tiny_scenario(reps: usize) -> Scenario {
        parse_scenario(&format!(
            "name = tiny\nn = 128\np = 256\nrank = 1\nsingular_values = 60\n\
             u_signals = peak\nv_signals = poly\nnoise = gauss\nreps = {reps}\nseed = 7\n"
        ))
        .unwrap()
    }

    #[test]
    fn model_norm_matches_planted_values() {
        let mut s = tiny_scenario(1);
        s.n = 1024;
        s.p = 2048;
        s.singular_values = vec![100.0];
        let truth = build_model(&s).unwrap();
        // ||Xi||_F^2 = sum d_l^2 for orthonormal factors
        assert!((truth.xi_sq_norm - 10_000.0).abs() < 1e-6 * 10_000.0);
        // signal-to-noise for d = 50 at this size: 2500 / (n p)
        let snr: f64 = 2500.0 / (1024.0 * 2048.0);
        assert!((snr - 0.001_192_092_895_507_812_5).abs() < 1e-16);
    }

    #[test]
    fn rank2_model_is_orthonormal_with_exact_values() {
        let s = parse_scenario(
            "name = r2\nn = 128\np = 256\nrank = 2\nsingular_values = 90, 40\n\
             u_signals = peak, step\nv_signals = poly, sing\nnoise = gauss\nreps = 1\nseed = 3\n",
        )
        .unwrap();
        let truth = build_model(&s).unwrap();
        assert!(truth.u_true.ortho_defect() <= 1e-10);
        assert!(truth.v_true.ortho_defect() <= 1e-10);
        let expect = 90.0f64 * 90.0 + 40.0 * 40.0;
        assert!((truth.xi_sq_norm - expect).abs() < 1e-6 * expect);
    }

    #[test]
    fn noise_is_seed_deterministic() {
        let s = tiny_scenario(1);
        let truth = build_model(&s).unwrap();
        let mut r1 = StreamKey::new(5).rng();
        let mut r2 = StreamKey::new(5).rng();
        let a = add_noise(&truth.xi, NoiseLaw::GaussUnit, &mut r1);
        let b = add_noise(&truth.xi, NoiseLaw::GaussUnit, &mut r2);
        assert_eq!(a, b);
    }

    #[test]
    fn scaled_t5_has_unit_variance() {
        let mut rng = StreamKey::new(11).rng();
        let t5 = StudentT::new(5.0).unwrap();
        let scale = (3.0f64 / 5.0).sqrt();
        let m = 1_000_000;
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for _ in 0..m {
            let x = scale * rng.sample::<f64, _>(t5);
            sum += x;
            sum_sq += x * x;
        }
        let mean = sum / m as f64;
        let var = sum_sq / m as f64 - mean * mean;
        assert!((var - 1.0).abs() < 0.01, "variance {var}");
    }

    #[test]
    fn evaluate_perfect_fit_has_zero_losses() {
        let s = tiny_scenario(1);
        let truth = build_model(&s).unwrap();
        let m = evaluate(
            &truth.u_true.clone(),
            &truth.v_true.clone(),
            &truth.d,
            &truth,
            0.5,
            1.0,
        )
        .unwrap();
        assert!(m.space_loss_u <= 1e-12);
        assert!(m.space_loss_v <= 1e-12);
        assert!(m.recovery_loss <= 1e-12);
        assert!((m.time_ratio - 0.5).abs() < 1e-15);
    }

    #[test]
    fn evaluate_orthogonal_estimate_has_unit_space_loss() {
        let s = tiny_scenario(1);
        let truth = build_model(&s).unwrap();
        // a frame orthogonal to the truth: pick the coordinate direction
        // with the smallest truth weight... simplest is a canonical basis
        // vector orthogonalized against the truth column.
        let t = truth.u_true.column(0);
        let mut w = vec![0.0; t.len()];
        w[0] = 1.0;
        let c: f64 = t.iter().zip(&w).map(|(a, b)| a * b).sum();
        for (wi, ti) in w.iter_mut().zip(&t) {
            *wi -= c * ti;
        }
        let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        for wi in &mut w {
            *wi /= norm;
        }
        let u_orth = OrthonormalFrame::from_columns(s.n, &[w]).unwrap();
        let m = evaluate(&u_orth, &truth.v_true.clone(), &truth.d, &truth, 1.0, 1.0).unwrap();
        assert!((m.space_loss_u - 1.0).abs() <= 1e-10);
    }

    #[test]
    fn single_rep_report_equals_that_rep() {
        let report = run_scenario(&tiny_scenario(1)).unwrap();
        let m = &report.metrics;
        assert_eq!(m.reps_completed, 1);
        assert_eq!(m.reps_failed, 0);
        let rep = m.sparse_per_rep[0].as_ref().unwrap();
        assert_eq!(m.sparse.space_loss_u.median, rep.space_loss_u);
        assert_eq!(m.sparse.space_loss_u.mad, 0.0);
    }

    #[test]
    fn report_metrics_are_thread_count_invariant() {
        let scenario = tiny_scenario(3);
        let run = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap();
            pool.install(|| run_scenario(&scenario).unwrap().metrics_json())
        };
        let a = run(1);
        let b = run(4);
        assert_eq!(a, b);
    }
}
