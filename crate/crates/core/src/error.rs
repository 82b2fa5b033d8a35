use thiserror::Error;

/// Errors raised anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("case syntax error on line {line}: {message}")]
    Syntax { line: usize, message: String },

    #[error("invalid case: {0}")]
    InvalidCase(String),

    #[error("unknown bus {0}")]
    UnknownBus(usize),

    #[error("line {from}-{to} has zero impedance")]
    ZeroImpedance { from: usize, to: usize },

    #[error("power flow did not converge after {iterations} iterations (mismatch {mismatch:.3e})")]
    PowerFlowDiverged { iterations: usize, mismatch: f64 },

    #[error("operating point is not steady (max derivative/residual {residual:.3e})")]
    InconsistentOperatingPoint { residual: f64 },

    #[error(
        "newton solve did not converge after {iterations} iterations (residual {residual:.3e})"
    )]
    NewtonDiverged { iterations: usize, residual: f64 },

    #[error("step size underflow (dt = {0:e})")]
    StepUnderflow(f64),

    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("insufficient history: need at least {needed} samples, got {got}")]
    InsufficientHistory { needed: usize, got: usize },

    #[error("threshold scan exhausted without reaching the false-alarm target {target}")]
    UnreachableTarget { target: f64 },

    #[error("negative radicand {0:.3e}: detector state exceeds tau + b")]
    NegativeRadicand(f64),

    #[error("matrix is singular or ill-conditioned (condition number {condition:.3e})")]
    IllConditioned { condition: f64 },

    #[error("measurement matrix is rank deficient (rank {rank} < {rows} rows)")]
    RankDeficient { rank: usize, rows: usize },

    #[error("observer gain validation failed: {0}")]
    GainValidation(String),

    #[error("optimization solver failure: {0}")]
    Solver(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("step {step} ({stage}): {source}")]
    Stage {
        step: usize,
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn at(self, step: usize, stage: &'static str) -> Self {
        Error::Stage {
            step,
            stage,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
