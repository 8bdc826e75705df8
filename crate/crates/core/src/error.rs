use std::io;

use thiserror::Error;

/// Errors raised across the classification pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate cube: global maximum {0} is not positive")]
    DegenerateCube(f64),
    #[error("invalid shape: {0}")]
    InvalidShape(String),
    #[error("non-finite value at flat index {0}")]
    NonFinite(usize),
    #[error("class {0} has no labeled pixels")]
    MissingClass(u16),
    #[error("class {class} has {available} labeled pixels, {requested} requested for training")]
    InsufficientSamples {
        class: u16,
        requested: usize,
        available: usize,
    },
    #[error("invalid split: {0}")]
    InvalidSplit(String),
    #[error("invalid label {label} (expected 1..={num_classes})")]
    InvalidLabel { label: u16, num_classes: usize },
    #[error("pixel ({row}, {col}) out of bounds for {height}x{width} field")]
    IndexError {
        row: usize,
        col: usize,
        height: usize,
        width: usize,
    },
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("numerical error: {0}")]
    Numerical(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("graph has no non-background pixels")]
    EmptyGraph,
    #[error("node {0} has no probability vector")]
    MissingUnary(usize),
    #[error("enumeration limit exceeded: {states}^{nodes} configurations")]
    EnumerationLimit { nodes: usize, states: usize },
    #[error("evaluated pixel ({row}, {col}) has no predicted label")]
    UnlabeledPrediction { row: usize, col: usize },
    #[error("empty evaluation set")]
    EmptyEvaluation,
    #[error("scene generation failed: {0}")]
    GenerationFailure(String),
    #[error("format error: {0}")]
    Format(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    /// Attributes an error to a pipeline stage.
    pub fn at(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) trait StageExt<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|e| e.at(stage))
    }
}
