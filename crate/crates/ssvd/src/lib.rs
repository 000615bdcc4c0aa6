//! Sparse SVD by thresholded subspace iteration.
//!
//! The estimator recovers a low-rank signal matrix with sparse singular
//! vectors from a large noisy table. Each sweep multiplies the data into the
//! current frame, thresholds entrywise at data-driven per-column levels, and
//! re-orthonormalizes; all `r` vectors are extracted simultaneously, so the
//! returned frames are exactly orthonormal. Initialization screens rows and
//! columns with robust Huberized tests and seeds the iteration with the SVD
//! of the small selected submatrix, which is also what makes the whole fit
//! cheaper than an ordinary SVD of the full matrix when the signal is
//! sparse.
//!
//! The crate also ships the supporting pieces: dense linear-algebra kernels
//! (Householder QR, a symmetric eigensolver, reduced SVD), robust scale
//! estimators, bi-cross-validation rank selection, a Symmlet-8 wavelet
//! transform with sparse test signals, and a simulation lab that plants
//! low-rank models, runs seeded repetitions, and reports median/MAD
//! summaries of the losses.
//!
//! Everything seeded is bit-reproducible: randomness flows through named
//! substreams of a master seed, and parallel sections reduce in fixed order,
//! so results do not depend on the number of threads.

pub mod fit;
pub mod frame;
pub mod init;
pub mod io;
pub mod linalg;
pub mod matrix;
pub mod rank;
pub mod rng;
pub mod robust;
pub mod scenario;
pub mod signal;
pub mod sim;
pub mod threshold;
pub mod wavelet;

pub use fit::{fit, vanilla_subspace_iteration, FitError, SsvdConfig, SsvdFit};
pub use frame::{FrameError, OrthonormalFrame, ReducedSvd};
pub use init::{holm_reject, initialize, screen_axis, InitError, InitFrames, SelectionResult};
pub use linalg::{qr_orthonormalize, reduced_svd, subspace_distance, LinalgError};
pub use matrix::{DenseMatrix, MatrixError};
pub use rank::{estimate_rank, FoldScheme, RankError, RankEstimate};
pub use robust::{abs_quantile, estimate_sigma, huber_rho, mad, median, NoiseScale, RobustError};
pub use scenario::{parse_scenario, NoiseLaw, Scenario, ScenarioError};
pub use signal::{make_test_signal, SignalError, SignalKind, TestSignal};
pub use sim::{
    add_noise, build_model, evaluate, run_scenario, EvalReport, MetricSummary, ModelTruth,
    RepMetrics, SimError,
};
pub use threshold::{
    eta, partition_blocks, threshold_levels, BlockPartition, LevelMethod, ThresholdError,
    ThresholdKind, ThresholdLevels,
};
pub use wavelet::{default_levels, dwt_symmlet8, idwt_symmlet8, max_levels, WaveletError};
