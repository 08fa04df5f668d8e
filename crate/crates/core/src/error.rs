use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("index {index} out of range 1..={max}")]
    IndexRange { index: usize, max: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("kernel matrix not positive definite after jitter escalation (condition estimate {condition:.3e})")]
    Conditioning { condition: f64 },

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("degenerate search direction: {0}")]
    DegenerateDirection(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("no feasible solution: {0}")]
    Infeasible(String),

    #[error("acquisition failed at level {level}: {detail}")]
    Acquisition { level: usize, detail: String },

    #[error("no feasible query candidate at level {level}")]
    LevelDegenerate { level: usize },

    #[error("model inconsistency at level {level}: {detail}")]
    ModelInconsistency { level: usize, detail: String },

    #[error("unknown problem `{name}` (known: {known})")]
    UnknownProblem { name: String, known: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("model file version {found} is not supported (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error("corrupt model file: {0}")]
    Corrupt(String),

    #[error("benchmark failure rate {failed}/{total} exceeds 1%")]
    FailureRate { failed: usize, total: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn dim(expected: usize, got: usize) -> Self {
        Error::Dimension { expected, got }
    }
}
