//! Degree-of-structure scoring.
//!
//! Probabilistic scorers produce six class probabilities; the score of an ion
//! image is the probability mass on a target class subset. The classical
//! baselines ([`pca`], [`morans`]) produce raw ranking scores that are only
//! comparable within one scorer.

pub mod external;
pub mod morans;
pub mod pca;

use std::fmt;
use std::str::FromStr;
use std::time::Duration;

use thiserror::Error;

use crate::classes::{StructuralClass, TargetSet};
use crate::stats::{self, StatsError};

pub use external::{score_external, ExternalScorer};
pub use morans::morans_i;
pub use pca::{pca_reference, pca_reference_scores, PcaReference};

/// Allowed deviation of Σp from 1.
pub const PROB_SUM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScoreError {
    #[error("logit {index} is not finite ({value})")]
    NonFiniteLogit { index: usize, value: f64 },
    #[error("invalid class probabilities: {0}")]
    InvalidProbabilities(String),
    #[error("external scorer crashed: {0}")]
    ScorerCrashed(String),
    #[error("external scorer protocol violation: {0}")]
    ProtocolViolation(String),
    #[error("external scorer reported an error for request {id}: {message}")]
    ScorerReported { id: u64, message: String },
    #[error("external scorer timed out after {0:?}")]
    Timeout(Duration),
    #[error("every image in the stack is constant")]
    DegenerateStack,
    #[error("PCA needs at least 2 images, got {0}")]
    TooFewImages(usize),
    #[error("image is constant")]
    ConstantImage,
    #[error("image needs at least 2 pixels")]
    TooFewPixels,
    #[error("input is constant, correlation is undefined")]
    ConstantInput,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid scorer spec: {0}")]
    InvalidSpec(String),
}

impl From<StatsError> for ScoreError {
    fn from(e: StatsError) -> Self {
        match e {
            StatsError::ConstantInput | StatsError::Empty => ScoreError::ConstantInput,
            StatsError::ShapeMismatch(a, b) => ScoreError::ShapeMismatch(format!("{a} vs {b} pixels")),
        }
    }
}

/// Softmax output ordered as [`StructuralClass::ALL`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassProbabilities([f64; StructuralClass::COUNT]);

impl ClassProbabilities {
    /// Checks every `p_k ∈ [0, 1]` and `|Σp − 1| ≤ 1e-6`.
    pub fn new(p: [f64; StructuralClass::COUNT]) -> Result<Self, ScoreError> {
        Self::with_tolerance(p, PROB_SUM_TOLERANCE)
    }

    pub(crate) fn with_tolerance(p: [f64; StructuralClass::COUNT], tol: f64) -> Result<Self, ScoreError> {
        if let Some(v) = p.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(ScoreError::InvalidProbabilities(format!("{v} is outside [0, 1]")));
        }
        let sum: f64 = p.iter().sum();
        if (sum - 1.0).abs() > tol {
            return Err(ScoreError::InvalidProbabilities(format!("probabilities sum to {sum}")));
        }
        Ok(ClassProbabilities(p))
    }

    pub fn uniform() -> Self {
        ClassProbabilities([1.0 / 6.0; StructuralClass::COUNT])
    }

    pub fn values(&self) -> &[f64; StructuralClass::COUNT] {
        &self.0
    }

    pub fn get(&self, class: StructuralClass) -> f64 {
        self.0[class.index()]
    }

    pub fn argmax(&self) -> StructuralClass {
        let mut best = 0;
        for k in 1..StructuralClass::COUNT {
            if self.0[k] > self.0[best] {
                best = k;
            }
        }
        StructuralClass::ALL[best]
    }
}

/// Max-shifted softmax over the six class logits.
pub fn softmax(logits: &[f64; StructuralClass::COUNT]) -> Result<ClassProbabilities, ScoreError> {
    if let Some((index, &value)) = logits.iter().enumerate().find(|(_, v)| !v.is_finite()) {
        return Err(ScoreError::NonFiniteLogit { index, value });
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut p = logits.map(|z| (z - max).exp());
    let total: f64 = p.iter().sum();
    for v in &mut p {
        *v /= total;
    }
    Ok(ClassProbabilities(p))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StructureScore {
    pub value: f64,
    pub target_set: TargetSet,
}

/// Probability mass on `targets`. The empty set scores 0.
pub fn aggregate_score(probs: &ClassProbabilities, targets: TargetSet) -> StructureScore {
    let value = targets.iter().map(|c| probs.get(c)).sum();
    StructureScore {
        value,
        target_set: targets,
    }
}

/// Pearson correlation of two equally shaped pixel grids.
pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64, ScoreError> {
    Ok(stats::pearson(a, b)?)
}

/// Default number of images per external scorer request batch.
pub const DEFAULT_BATCH_SIZE: usize = 32;
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);

#[derive(Debug, Clone, PartialEq)]
pub enum ScorerKind {
    /// Child process speaking the stdio JSON protocol; `command[0]` is the
    /// program, the rest its arguments.
    ExternalProcess {
        command: Vec<String>,
        timeout: Duration,
        batch_size: usize,
    },
    PcaReference,
    MoransI,
    Constant(ClassProbabilities),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScorerSpec {
    pub kind: ScorerKind,
    pub target_set: TargetSet,
}

impl ScorerSpec {
    pub fn new(kind: ScorerKind) -> Self {
        ScorerSpec {
            kind,
            target_set: TargetSet::default_informative(),
        }
    }

    pub fn with_targets(mut self, targets: TargetSet) -> Self {
        self.target_set = targets;
        self
    }

    pub fn external(command: &str) -> Result<Self, ScoreError> {
        let command: Vec<String> = command.split_whitespace().map(str::to_string).collect();
        if command.is_empty() {
            return Err(ScoreError::InvalidSpec("external scorer command is empty".into()));
        }
        Ok(ScorerSpec::new(ScorerKind::ExternalProcess {
            command,
            timeout: DEFAULT_TIMEOUT,
            batch_size: DEFAULT_BATCH_SIZE,
        }))
    }

    /// Whether scores go through class probabilities and class-subset
    /// aggregation (as opposed to raw baseline scores).
    pub fn is_probabilistic(&self) -> bool {
        matches!(self.kind, ScorerKind::ExternalProcess { .. } | ScorerKind::Constant(_))
    }
}

impl FromStr for ScorerSpec {
    type Err = ScoreError;

    /// `pca`, `moransi`, `external:<command line>` or `const:<p0,...,p5>`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        match s.to_ascii_lowercase().as_str() {
            "pca" => return Ok(ScorerSpec::new(ScorerKind::PcaReference)),
            "moransi" | "morans" | "moran" => return Ok(ScorerSpec::new(ScorerKind::MoransI)),
            _ => {}
        }
        if let Some(cmd) = s.strip_prefix("external:") {
            return ScorerSpec::external(cmd);
        }
        if let Some(list) = s.strip_prefix("const:") {
            let values: Vec<f64> = list
                .split(',')
                .map(|v| v.trim().parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|e| ScoreError::InvalidSpec(format!("const probabilities: {e}")))?;
            let p: [f64; 6] = values
                .try_into()
                .map_err(|v: Vec<f64>| ScoreError::InvalidSpec(format!("const needs 6 values, got {}", v.len())))?;
            return Ok(ScorerSpec::new(ScorerKind::Constant(ClassProbabilities::new(p)?)));
        }
        Err(ScoreError::InvalidSpec(format!(
            "unknown scorer {s:?} (expected pca, moransi, external:<cmd> or const:<p0..p5>)"
        )))
    }
}

impl fmt::Display for ScorerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            ScorerKind::PcaReference => f.write_str("pca"),
            ScorerKind::MoransI => f.write_str("moransi"),
            ScorerKind::ExternalProcess { command, .. } => write!(f, "external:{}", command.join(" ")),
            ScorerKind::Constant(p) => {
                let vals: Vec<String> = p.values().iter().map(f64::to_string).collect();
                write!(f, "const:{}", vals.join(","))
            }
        }
    }
}
