use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("constraint {index} is active at the starting point (G = {value:e})")]
    ActiveAtStart { index: usize, value: f64 },

    #[error("matrix is singular to working precision")]
    SingularMatrix,

    #[error("nullspace has dimension greater than one (rank drop)")]
    RankDrop,

    #[error("expected a two-dimensional nullspace at the branch point: {0}")]
    NotBranchPoint(String),

    #[error("stage `{stage}`: {message}")]
    Stage { stage: String, message: String },

    #[error("unknown parameter `{0}`")]
    UnknownParameter(String),

    #[error("parameter conflict: {0}")]
    ParameterConflict(String),

    #[error("manifold dimension is {0}, expected a one-dimensional run")]
    ManifoldDimension(isize),

    #[error("Newton corrector failed to converge: {0}")]
    NoConvergence(String),

    #[error("no sign change of `{0}` between the bracketing charts")]
    NoSignChange(String),

    #[error("invalid schedule: {0}")]
    Schedule(String),

    #[error("unknown problem `{0}`")]
    UnknownProblem(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn stage(stage: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Stage {
            stage: stage.into(),
            message: message.into(),
        }
    }
}
