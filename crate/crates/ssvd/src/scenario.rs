//! Scenario files: a small `key = value` format describing one simulation
//! cell (dimensions, planted factors, noise law, repetitions, seed).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fit::SsvdConfig;
use crate::rng::{stream, StreamKey};
use crate::signal::SignalKind;
use crate::threshold::ThresholdKind;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScenarioError {
    #[error("line {line}: expected `key = value`, got `{text}`")]
    Malformed { line: usize, text: String },
    #[error("line {line}, field `{field}`: {message}")]
    BadValue {
        line: usize,
        field: String,
        message: String,
    },
    #[error("field `{field}`: {message}")]
    Invalid { field: String, message: String },
    #[error("missing required field `{field}`")]
    MissingField { field: String },
    #[error("line {line}: unknown field `{field}`")]
    UnknownField { line: usize, field: String },
}

/// Noise distribution for the additive errors; both laws have unit variance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NoiseLaw {
    GaussUnit,
    T5Scaled,
}

impl std::str::FromStr for NoiseLaw {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gauss" | "gauss_unit" | "normal" => Ok(NoiseLaw::GaussUnit),
            "t5" | "t5_scaled" => Ok(NoiseLaw::T5Scaled),
            other => Err(format!("unknown noise law `{other}` (use gauss or t5)")),
        }
    }
}

impl std::fmt::Display for NoiseLaw {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            NoiseLaw::GaussUnit => write!(f, "gauss"),
            NoiseLaw::T5Scaled => write!(f, "t5"),
        }
    }
}

/// One simulation cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub n: usize,
    pub p: usize,
    pub rank: usize,
    pub singular_values: Vec<f64>,
    pub u_signals: Vec<String>,
    pub v_signals: Vec<String>,
    pub noise: NoiseLaw,
    pub reps: usize,
    pub seed: u64,
    pub threshold: ThresholdKind,
    pub beta: f64,
    pub alpha: f64,
    pub m_boot: usize,
    pub epsilon: f64,
    pub max_iters: usize,
}

impl Scenario {
    /// Parsed signal kinds for the left factors.
    pub fn u_kinds(&self) -> Result<Vec<SignalKind>, ScenarioError> {
        parse_kinds(&self.u_signals, "u_signals")
    }

    pub fn v_kinds(&self) -> Result<Vec<SignalKind>, ScenarioError> {
        parse_kinds(&self.v_signals, "v_signals")
    }

    /// Fit configuration for repetition `rep`, with the bootstrap seed
    /// derived from the scenario seed.
    pub fn fit_config(&self, rep: usize) -> SsvdConfig {
        SsvdConfig {
            rank: self.rank,
            kind: self.threshold,
            epsilon: self.epsilon,
            max_iters: self.max_iters,
            beta: self.beta,
            alpha: self.alpha,
            m_boot: self.m_boot,
            seed: StreamKey::new(self.seed)
                .child(stream::FIT)
                .child(rep as u64)
                .seed(),
        }
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let invalid = |field: &str, message: String| ScenarioError::Invalid {
            field: field.to_string(),
            message,
        };
        if self.rank == 0 {
            return Err(invalid("rank", "must be at least 1".into()));
        }
        for (field, len) in [("n", self.n), ("p", self.p)] {
            if len < 64 || !len.is_power_of_two() {
                return Err(invalid(
                    field,
                    format!("must be a power of two >= 64, got {len}"),
                ));
            }
        }
        if self.singular_values.len() != self.rank {
            return Err(invalid(
                "singular_values",
                format!(
                    "expected {} values for rank {}, got {}",
                    self.rank,
                    self.rank,
                    self.singular_values.len()
                ),
            ));
        }
        if self.singular_values.iter().any(|&d| !(d > 0.0)) {
            return Err(invalid("singular_values", "must all be positive".into()));
        }
        if self
            .singular_values
            .windows(2)
            .any(|w| !(w[1] < w[0]))
        {
            return Err(invalid(
                "singular_values",
                "must be strictly decreasing".into(),
            ));
        }
        for (field, list) in [("u_signals", &self.u_signals), ("v_signals", &self.v_signals)] {
            if list.len() != self.rank {
                return Err(invalid(
                    field,
                    format!("expected {} names for rank {}", self.rank, self.rank),
                ));
            }
        }
        self.u_kinds()?;
        self.v_kinds()?;
        if self.reps == 0 {
            return Err(invalid("reps", "must be at least 1".into()));
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(invalid("beta", "must lie in (0,1)".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(invalid("alpha", "must lie in (0,1)".into()));
        }
        if self.m_boot == 0 {
            return Err(invalid("boot", "must be at least 1".into()));
        }
        if !(self.epsilon > 0.0) {
            return Err(invalid("epsilon", "must be positive".into()));
        }
        if self.max_iters == 0 {
            return Err(invalid("max_iters", "must be at least 1".into()));
        }
        if let ThresholdKind::Scad { a } = self.threshold {
            if !(a > 2.0) {
                return Err(invalid("scad_a", format!("must exceed 2, got {a}")));
            }
        }
        Ok(())
    }
}

fn parse_kinds(names: &[String], field: &str) -> Result<Vec<SignalKind>, ScenarioError> {
    names
        .iter()
        .map(|name| {
            name.parse::<SignalKind>().map_err(|e| ScenarioError::Invalid {
                field: field.to_string(),
                message: e.to_string(),
            })
        })
        .collect()
}

/// Parse the `key = value` scenario format. `#` starts a comment; list
/// values are comma-separated.
pub fn parse_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    let mut name = None;
    let mut n = None;
    let mut p = None;
    let mut rank = None;
    let mut singular_values: Option<Vec<f64>> = None;
    let mut u_signals: Option<Vec<String>> = None;
    let mut v_signals: Option<Vec<String>> = None;
    let mut noise = None;
    let mut reps = None;
    let mut seed = None;
    let mut threshold_name: Option<(usize, String)> = None;
    let mut scad_a: Option<f64> = None;
    let mut beta = 0.95;
    let mut alpha = 0.05;
    let mut m_boot = 100usize;
    let mut epsilon = 1e-8;
    let mut max_iters = 100usize;

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or(ScenarioError::Malformed {
            line: line_no,
            text: raw.trim().to_string(),
        })?;
        let key = key.trim();
        let value = value.trim();
        let bad = |message: String| ScenarioError::BadValue {
            line: line_no,
            field: key.to_string(),
            message,
        };
        match key {
            "name" => name = Some(value.to_string()),
            "n" => n = Some(value.parse::<usize>().map_err(|e| bad(e.to_string()))?),
            "p" => p = Some(value.parse::<usize>().map_err(|e| bad(e.to_string()))?),
            "rank" => rank = Some(value.parse::<usize>().map_err(|e| bad(e.to_string()))?),
            "singular_values" => {
                let vals: Result<Vec<f64>, _> = value
                    .split(',')
                    .map(|s| s.trim().parse::<f64>())
                    .collect();
                singular_values = Some(vals.map_err(|e| bad(e.to_string()))?);
            }
            "u_signals" => {
                u_signals = Some(value.split(',').map(|s| s.trim().to_string()).collect())
            }
            "v_signals" => {
                v_signals = Some(value.split(',').map(|s| s.trim().to_string()).collect())
            }
            "noise" => noise = Some(value.parse::<NoiseLaw>().map_err(bad)?),
            "reps" => reps = Some(value.parse::<usize>().map_err(|e| bad(e.to_string()))?),
            "seed" => seed = Some(value.parse::<u64>().map_err(|e| bad(e.to_string()))?),
            "threshold" => threshold_name = Some((line_no, value.to_ascii_lowercase())),
            "scad_a" => scad_a = Some(value.parse::<f64>().map_err(|e| bad(e.to_string()))?),
            "beta" => beta = value.parse::<f64>().map_err(|e| bad(e.to_string()))?,
            "alpha" => alpha = value.parse::<f64>().map_err(|e| bad(e.to_string()))?,
            "boot" => m_boot = value.parse::<usize>().map_err(|e| bad(e.to_string()))?,
            "epsilon" => epsilon = value.parse::<f64>().map_err(|e| bad(e.to_string()))?,
            "max_iters" => {
                max_iters = value.parse::<usize>().map_err(|e| bad(e.to_string()))?
            }
            other => {
                return Err(ScenarioError::UnknownField {
                    line: line_no,
                    field: other.to_string(),
                })
            }
        }
    }

    let require = |field: &str| ScenarioError::MissingField {
        field: field.to_string(),
    };
    let threshold = match threshold_name {
        None => ThresholdKind::Hard,
        Some((line, name)) => match name.as_str() {
            "hard" => ThresholdKind::Hard,
            "soft" => ThresholdKind::Soft,
            "scad" => ThresholdKind::Scad {
                a: scad_a.unwrap_or(crate::threshold::SCAD_DEFAULT_A),
            },
            other => {
                return Err(ScenarioError::BadValue {
                    line,
                    field: "threshold".to_string(),
                    message: format!("unknown kind `{other}` (use hard, soft or scad)"),
                })
            }
        },
    };

    let scenario = Scenario {
        name: name.ok_or_else(|| require("name"))?,
        n: n.ok_or_else(|| require("n"))?,
        p: p.ok_or_else(|| require("p"))?,
        rank: rank.ok_or_else(|| require("rank"))?,
        singular_values: singular_values.ok_or_else(|| require("singular_values"))?,
        u_signals: u_signals.ok_or_else(|| require("u_signals"))?,
        v_signals: v_signals.ok_or_else(|| require("v_signals"))?,
        noise: noise.ok_or_else(|| require("noise"))?,
        reps: reps.ok_or_else(|| require("reps"))?,
        seed: seed.ok_or_else(|| require("seed"))?,
        threshold,
        beta,
        alpha,
        m_boot,
        epsilon,
        max_iters,
    };
    scenario.validate()?;
    Ok(scenario)
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "\
# rank-one cell
name = demo
n = 128
p = 256
rank = 1
singular_values = 100
u_signals = peak
v_signals = poly
noise = gauss
reps = 3
seed = 42
";

    #[test]
    fn parses_minimal_file() {
        let s = parse_scenario(SAMPLE).unwrap();
        assert_eq!(s.name, "demo");
        assert_eq!((s.n, s.p, s.rank, s.reps, s.seed), (128, 256, 1, 3, 42));
        assert_eq!(s.noise, NoiseLaw::GaussUnit);
        assert_eq!(s.threshold, ThresholdKind::Hard);
        assert_eq!(s.u_kinds().unwrap(), vec![SignalKind::Peak]);
    }

    #[test]
    fn rejects_zero_reps_with_field_diagnostic() {
        let text = SAMPLE.replace("reps = 3", "reps = 0");
        let err = parse_scenario(&text).unwrap_err();
        assert!(matches!(err, ScenarioError::Invalid { ref field, .. } if field == "reps"));
    }

    #[test]
    fn rejects_unknown_field_with_line_number() {
        let text = format!("{SAMPLE}bogus = 1\n");
        let err = parse_scenario(&text).unwrap_err();
        assert!(matches!(
            err,
            ScenarioError::UnknownField { line: 12, ref field } if field == "bogus"
        ));
    }

    #[test]
    fn rejects_non_decreasing_singular_values() {
        let text = SAMPLE
            .replace("rank = 1", "rank = 2")
            .replace("singular_values = 100", "singular_values = 100, 100")
            .replace("u_signals = peak", "u_signals = peak, step")
            .replace("v_signals = poly", "v_signals = poly, sing");
        let err = parse_scenario(&text).unwrap_err();
        assert!(
            matches!(err, ScenarioError::Invalid { ref field, .. } if field == "singular_values")
        );
    }

    #[test]
    fn fit_config_seeds_differ_per_rep() {
        let s = parse_scenario(SAMPLE).unwrap();
        assert_ne!(s.fit_config(0).seed, s.fit_config(1).seed);
        assert_eq!(s.fit_config(0).seed, s.fit_config(0).seed);
    }
}
