use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = HsiError> = std::result::Result<T, E>;

/// Broad failure category, used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Numeric,
}

#[derive(Debug, Error)]
pub enum HsiError {
    #[error("missing file: {0}")]
    MissingFile(PathBuf),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("non-finite value at flat index {0}")]
    NonFiniteValue(usize),
    #[error("empty index set")]
    EmptyIndexSet,
    #[error("class {class} has {count} labeled pixels, at least {min} required")]
    ClassTooSmall { class: u16, count: usize, min: usize },
    #[error("invalid spec: {0}")]
    InvalidSpec(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("{n_noise_bands} noise bands requested but only {bands} bands present")]
    NoiseBandsExceedB { n_noise_bands: usize, bands: usize },
    #[error("singular system: Gram matrix is not positive definite")]
    SingularSystem,
    #[error("class {0} has too few training pixels")]
    EmptyClass(u16),
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("mixing ratio {0} outside (0.5, 1)")]
    AlphaOutOfRange(f64),
    #[error("training set contains fewer than two classes")]
    SingleClassTrainingSet,
    #[error("expected {expected} MDAE models, got {got}")]
    ModelCountMismatch { expected: usize, got: usize },
    #[error("index {index} out of range for {len} pixels")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("invalid topology: {0}")]
    InvalidTopology(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error("label {label} outside 1..={n_classes}")]
    LabelOutOfRange { label: u16, n_classes: usize },
    #[error("empty test set")]
    EmptyTestSet,
    #[error("malformed {what}: {reason}")]
    Format { what: &'static str, reason: String },
    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<HsiError>,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl HsiError {
    pub fn kind(&self) -> ErrorKind {
        use HsiError::*;
        match self {
            InvalidSpec(_) | InvalidConfig(_) | InvalidTopology(_) | Json(_) => ErrorKind::Config,
            SingularSystem | NonFiniteLoss { .. } => ErrorKind::Numeric,
            Stage { source, .. } => source.kind(),
            _ => ErrorKind::Data,
        }
    }

    pub(crate) fn at_stage(self, stage: &'static str) -> Self {
        match self {
            HsiError::Stage { .. } => self,
            other => HsiError::Stage {
                stage,
                source: Box::new(other),
            },
        }
    }
}
