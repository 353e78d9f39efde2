use thiserror::Error;

/// Errors raised by the solver stack.
#[derive(Debug, Error)]
pub enum GameError {
    #[error("dimension mismatch for player {player}: expected {expected}, got {actual}")]
    DimensionMismatch {
        player: usize,
        expected: usize,
        actual: usize,
    },

    #[error("non-finite entry in {context}")]
    NonFiniteInput { context: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("coupled linear solve failed at time step {step} (rcond {rcond:.3e})")]
    SolveFailure { step: usize, rcond: f64 },

    #[error("degenerate geometry at time step: {0}")]
    DegenerateGeometry(String),

    #[error("trajectory diverged (non-finite state) at time step {step}")]
    Divergence { step: usize },

    #[error("solver diverged at iteration {iteration}")]
    SolverDivergence { iteration: usize },

    #[error("receding-horizon episode failed at replan {replan}: {source}")]
    EpisodeFailure {
        replan: usize,
        #[source]
        source: Box<GameError>,
    },

    #[error("scenario config error: {0}")]
    Config(String),

    #[error("io error at {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, GameError>;
