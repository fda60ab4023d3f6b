use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the reconstruction library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: {message}")]
    Format {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("unsupported topology: {0}")]
    UnsupportedTopology(String),

    #[error("topology error: {0}")]
    Topology(String),

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("degenerate normal at vertex {vertex}: all incident faces have zero area")]
    DegenerateNormal { vertex: usize },

    #[error("mesh is not symmetric within tolerance; {} vertices without counterpart (first: {:?})", .offending.len(), .offending.iter().take(8).collect::<Vec<_>>())]
    Asymmetry { offending: Vec<usize> },

    #[error("vertex {vertex} has no neighbours")]
    Connectivity { vertex: usize },

    #[error("rank-deficient system: {0}")]
    RankDeficient(String),

    #[error("solver failed to reach tolerance (relative residual {residual:e})")]
    SolverFailure { residual: f64 },

    #[error("no constraints: {0}")]
    NoConstraints(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("annotation error: {0}")]
    Annotation(String),

    #[error("point ({x:.2}, {y:.2}) lies outside the {width}x{height} frame")]
    OutOfFrame {
        x: f64,
        y: f64,
        width: usize,
        height: usize,
    },

    #[error("input is not unit length (norm {norm})")]
    Normalization { norm: f64 },

    #[error("ill-conditioned lighting system (condition estimate {condition:e}); use a positive ridge")]
    Conditioning { condition: f64 },

    #[error("optimizer diverged at iteration {iteration}: objective trace {trace:?}")]
    Divergence { iteration: usize, trace: Vec<f64> },

    #[error("alignment error: {0}")]
    Alignment(String),

    #[error("UV atlas error: {0}")]
    Atlas(String),

    #[error("mask has no visible texels")]
    EmptyVisibility,

    #[error("empty selection: {0}")]
    EmptySelection(String),

    #[error("bounds error: position ({x}, {y}) outside [0, {max_x}]x[0, {max_y}]")]
    Bounds {
        x: f64,
        y: f64,
        max_x: f64,
        max_y: f64,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image error on {path}: {message}")]
    Image { path: PathBuf, message: String },

    #[error("JSON error on {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            source,
        }
    }

    pub fn in_stage(self, stage: &str) -> Self {
        Error::Stage {
            stage: stage.to_string(),
            source: Box::new(self),
        }
    }
}
