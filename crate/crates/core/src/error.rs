use std::path::PathBuf;

/// Errors produced by the engine.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("degenerate tetrahedron {index} (|volume| = {volume:e} m^3)")]
    DegenerateTet { index: usize, volume: f64 },

    #[error("degenerate triangle {index} (area = {area:e} m^2)")]
    DegenerateTriangle { index: usize, area: f64 },

    #[error("degenerate geometry: {0}")]
    Degenerate(String),

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("inverted element {tet} (det F = {det:e})")]
    InvertedElement { tet: usize, det: f64 },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("linear solve failed: {0}")]
    LinearSolve(String),

    #[error(
        "Newton stalled after {iterations} iterations: gradient inf-norm {gradient_norm:e} \
         (tolerance {tolerance:e}), last step {last_alpha:e}"
    )]
    NewtonStall {
        iterations: usize,
        gradient_norm: f64,
        tolerance: f64,
        last_alpha: f64,
    },

    #[error(
        "kinematic constraints infeasible after {rounds} rounds: residual history {residuals:?}"
    )]
    ConstraintInfeasible { rounds: usize, residuals: Vec<f64> },

    #[error("initial state intersects: {}", pairs.join("; "))]
    InitialIntersection { pairs: Vec<String> },

    #[error("robot model error: {0}")]
    Robot(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
