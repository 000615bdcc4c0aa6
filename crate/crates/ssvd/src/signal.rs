//! Synthetic test functions whose wavelet expansions are sparse.
//!
//! The exact constants below define this crate's versions of the classic
//! peak/poly/step/sing test functions; they are part of the reproducibility
//! contract and are documented in the README. Signals are evaluated on the
//! midpoint grid `t_i = (i + 0.5) / len`.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SignalError {
    #[error("unknown signal name: {0}")]
    UnknownName(String),
    #[error("signal length must be a power of two >= 64, got {0}")]
    BadLength(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SignalKind {
    /// Three localized bumps.
    Peak,
    /// Piecewise polynomial with jumps between segments.
    Poly,
    /// Piecewise constant with eleven jumps.
    Step,
    /// A single inverse-distance singularity, off the grid.
    Sing,
}

impl SignalKind {
    pub const ALL: [SignalKind; 4] = [
        SignalKind::Peak,
        SignalKind::Poly,
        SignalKind::Step,
        SignalKind::Sing,
    ];
}

impl std::str::FromStr for SignalKind {
    type Err = SignalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "peak" => Ok(SignalKind::Peak),
            "poly" => Ok(SignalKind::Poly),
            "step" => Ok(SignalKind::Step),
            "sing" => Ok(SignalKind::Sing),
            other => Err(SignalError::UnknownName(other.to_string())),
        }
    }
}

impl std::fmt::Display for SignalKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            SignalKind::Peak => "peak",
            SignalKind::Poly => "poly",
            SignalKind::Step => "step",
            SignalKind::Sing => "sing",
        };
        write!(f, "{name}")
    }
}

/// A named test function sampled on an equispaced grid.
#[derive(Debug, Clone, PartialEq)]
pub struct TestSignal {
    pub kind: SignalKind,
    pub values: Vec<f64>,
}

/// Bump locations / heights / widths for `peak`.
const PEAK_LOCS: [f64; 3] = [0.23, 0.48, 0.76];
const PEAK_HEIGHTS: [f64; 3] = [5.0, 5.6, 4.6];
const PEAK_WIDTHS: [f64; 3] = [0.020, 0.060, 0.015];

/// Step positions and jump heights for `step` (cumulative-jump form).
/// Cumulative jump overlay for `poly`.
const POLY_JUMPS: [(f64, f64); 14] = [
    (0.07, 345.0),
    (0.13, -255.0),
    (0.19, 240.0),
    (0.27, -210.0),
    (0.33, 285.0),
    (0.41, -315.0),
    (0.47, 225.0),
    (0.53, -240.0),
    (0.61, 255.0),
    (0.67, -225.0),
    (0.73, 210.0),
    (0.79, -270.0),
    (0.87, 240.0),
    (0.93, -285.0),
];

const STEP_POSITIONS: [f64; 11] = [
    0.10, 0.13, 0.15, 0.23, 0.25, 0.40, 0.44, 0.65, 0.76, 0.78, 0.81,
];
const STEP_JUMPS: [f64; 11] = [
    4.0, -5.0, 3.0, -4.0, 5.0, -4.2, 2.1, 4.3, -3.1, 2.1, -4.2,
];

/// Evaluate the named test function at `len` equispaced midpoints.
pub fn make_test_signal(kind: SignalKind, len: usize) -> Result<TestSignal, SignalError> {
    if len < 64 || !len.is_power_of_two() {
        return Err(SignalError::BadLength(len));
    }
    let values = (0..len)
        .map(|i| {
            let t = (i as f64 + 0.5) / len as f64;
            evaluate(kind, t)
        })
        .collect();
    Ok(TestSignal { kind, values })
}

fn evaluate(kind: SignalKind, t: f64) -> f64 {
    match kind {
        SignalKind::Peak => {
            let mut y = 0.0;
            for k in 0..3 {
                let z = (t - PEAK_LOCS[k]).abs() / PEAK_WIDTHS[k];
                y += PEAK_HEIGHTS[k] * (1.0 + z).powi(-4);
            }
            y
        }
        SignalKind::Poly => {
            // Five cubic/quadratic fifths (jumps at 0.2, 0.4, 0.6, continuity
            // shift at 0.8) overlaid with varied-height cumulative jumps so
            // the wavelet spectrum carries mass at every resolution level.
            let base = if t < 0.2 {
                let s = 5.0 * t;
                20.0 * (s * s * s + s * s + 4.0)
            } else if t < 0.4 {
                let s = 2.0 - 5.0 * t;
                10.0 * s * s * s + 45.0
            } else if t < 0.6 {
                let s = 5.0 * t - 2.0;
                90.0 * (2.0 * s * s * s + s) + 100.0
            } else if t < 0.8 {
                let s = 5.0 * t - 3.0;
                16.0 * s * s + 8.0 * s + 16.0
            } else {
                let s = 5.0 * t - 4.0;
                20.0 * (s + 4.0) - 40.0
            };
            let mut y = base;
            for (pos, h) in POLY_JUMPS {
                if t >= pos {
                    y += h;
                }
            }
            // dominant smooth arch concentrating coarse-scale energy
            let z = (t - 0.5) / 0.06;
            if z.abs() < 1.0 {
                let w = 1.0 - z * z;
                y += 700.0 * w * w;
            }
            y
        }
        SignalKind::Step => {
            let mut y = 0.0;
            for k in 0..11 {
                if t >= STEP_POSITIONS[k] {
                    y += STEP_JUMPS[k];
                }
            }
            y
        }
        // Midpoint sampling keeps the pole at 0.5 off the grid.
        SignalKind::Sing => 1.0 / (t - 0.5).abs(),
    }
}
