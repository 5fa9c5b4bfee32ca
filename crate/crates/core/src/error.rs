use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the crate.
///
/// The variants are grouped so that the command-line front end can map them
/// to exit codes: configuration problems, infeasible schedules, and
/// everything else.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("infeasible batch: m·P·(T−B)/T = {value} < 1 for client {client}")]
    InfeasibleBatch { client: usize, value: f64 },

    #[error("deadline {deadline} does not exceed communication time {comm_time} of client {client}")]
    DeadlineTooShort {
        client: usize,
        deadline: f64,
        comm_time: f64,
    },

    #[error("batch-variance denominator m·P·(T−B)/T − 1 = {value} is not positive for client {client}")]
    InfeasibleDenominator { client: usize, value: f64 },

    #[error("truncation constraint violated: 5·Q^U = {value} at round {round}")]
    TruncationConstraint { round: usize, value: f64 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("client {0} has an empty local dataset")]
    EmptyDataset(usize),

    #[error("aggregation requires full participation, client {client} reached depth {depth}")]
    MissingClient { client: usize, depth: usize },

    #[error("bias correction undefined for p = {p} at layer {layer}")]
    BiasCorrection { layer: usize, p: f64 },

    #[error("singular task: {0}")]
    SingularTask(String),

    #[error("bad IDX magic {found:#010x} in {path:?}, expected {expected:#010x}")]
    BadMagic {
        path: PathBuf,
        found: u32,
        expected: u32,
    },

    #[error("truncated IDX file {0:?}")]
    TruncatedFile(PathBuf),

    #[error("image count {images} does not match label count {labels}")]
    CountMismatch { images: usize, labels: usize },

    #[error("cannot split {samples} samples across {users} users")]
    TooManyUsers { users: usize, samples: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for errors that mean "no feasible schedule / batch exists".
    pub fn is_infeasibility(&self) -> bool {
        matches!(
            self,
            Error::InfeasibleBatch { .. }
                | Error::DeadlineTooShort { .. }
                | Error::InfeasibleDenominator { .. }
                | Error::TruncationConstraint { .. }
                | Error::Infeasible(_)
        )
    }

    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_) | Error::Json(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
