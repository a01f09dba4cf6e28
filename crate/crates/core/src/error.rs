use std::path::PathBuf;

use crate::dynamics::DynamicState;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("speed {0} m/s is below the dynamic-model threshold; use the kinematic branch")]
    SingularSpeed(f64),

    #[error("integration diverged at state {0:?}")]
    IntegrationDiverged(Box<DynamicState>),

    #[error("{context}: parse error at byte {offset}: {message}")]
    Parse {
        context: String,
        offset: usize,
        message: String,
    },

    #[error("{context}: line {line}: {message}")]
    Schema {
        context: String,
        line: usize,
        message: String,
    },

    #[error("invalid track: {0}")]
    InvalidTrack(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("pose ({x:.3}, {y:.3}) is in collision")]
    PoseInCollision { x: f64, y: f64 },

    #[error("all particle weights are zero")]
    DegenerateBelief,

    #[error("infeasible optimisation bounds at index {0}")]
    InfeasibleBounds(usize),

    #[error("quadratic program is infeasible")]
    QpInfeasible,

    #[error("planner failed at step {step}: {message}")]
    Planner { step: usize, message: String },

    #[error("training diverged at update {0}")]
    TrainingDiverged(usize),

    #[error("empty raceline")]
    EmptyRaceline,

    #[error("unknown {kind} `{name}`")]
    Unknown { kind: &'static str, name: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn schema(context: impl Into<String>, line: usize, message: impl Into<String>) -> Self {
        Error::Schema {
            context: context.into(),
            line,
            message: message.into(),
        }
    }
}
