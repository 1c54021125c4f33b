use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("penetrating query: point ({x:.3}, {y:.3}) lies inside an obstacle or outside the arena")]
    PenetratingQuery { x: f64, y: f64 },

    #[error("penetrating obstacle: agent coincides with the nearest obstacle point")]
    PenetratingObstacle,

    #[error("penetrating teammate: neighbor coincides with the agent position")]
    PenetratingTeammate,

    #[error("spawn region infeasible after {attempts} consecutive rejections")]
    SpawnInfeasible { attempts: usize },

    #[error("invalid command for pursuer {index}: heading is not finite")]
    InvalidCommand { index: usize },

    #[error("expected {expected} headings, got {got}")]
    HeadingCount { expected: usize, got: usize },

    #[error("shape error: {0}")]
    Shape(String),

    #[error("numeric overflow in layer {layer} ({name})")]
    NumericOverflow { layer: usize, name: &'static str },

    #[error("non-finite loss at episode {episode}, update {update}: {diagnostics}")]
    NonFiniteLoss {
        episode: usize,
        update: usize,
        diagnostics: String,
    },

    #[error("replay underfilled: {len} transitions stored, {requested} requested")]
    ReplayUnderfilled { len: usize, requested: usize },

    #[error("empty evaluation: at least one episode is required")]
    EmptyEvaluation,

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("incompatible checkpoint: {0}")]
    Incompatible(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid arena: {0}")]
    InvalidArena(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
