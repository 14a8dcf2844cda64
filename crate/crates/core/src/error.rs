use thiserror::Error;

/// Errors raised anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: shape mismatch for {what}: expected {expected}, got {got}")]
    Shape {
        op: &'static str,
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("{op}: non-finite value at index {index}")]
    NumericBlowup { op: &'static str, index: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("{op}: invalid argument: {msg}")]
    Argument { op: &'static str, msg: String },

    #[error("{op}: degenerate posterior (every likelihood underflows)")]
    Degenerate { op: &'static str },

    #[error(
        "{op}: fixed-point iteration unstable (dt*|div b| = {factor:.3e}); use a smaller time step"
    )]
    Instability { op: &'static str, factor: f64 },

    #[error("budget exceeded: projected {projected:.3e} search nodes, budget {budget:.3e}")]
    Resource { projected: f64, budget: f64 },

    #[error("step {step}: {source}")]
    AtStep {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Attach the closed-loop time index to an error.
    pub fn at_step(self, step: usize) -> Self {
        Error::AtStep {
            step,
            source: Box::new(self),
        }
    }

    /// True when the error (or the error it wraps) is a configuration error.
    pub fn is_config(&self) -> bool {
        match self {
            Error::Config(_) | Error::Json(_) => true,
            Error::AtStep { source, .. } => source.is_config(),
            _ => false,
        }
    }
}

pub(crate) fn check_len(
    op: &'static str,
    what: &'static str,
    expected: usize,
    got: usize,
) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Shape {
            op,
            what,
            expected,
            got,
        })
    }
}

pub(crate) fn check_finite(op: &'static str, index: usize, values: &[f64]) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NumericBlowup { op, index })
    }
}
