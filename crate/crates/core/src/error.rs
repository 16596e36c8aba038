use thiserror::Error;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    /// A matrix or element list does not have the dimensions its peers imply.
    #[error("structural error: {0}")]
    Structural(String),

    /// An argument violates an operation's precondition.
    #[error("invalid argument: {0}")]
    Argument(String),

    /// A fit could not be carried out on the given points.
    #[error("degenerate input for {kind} fit: {reason}")]
    Degenerate { kind: &'static str, reason: String },

    /// No element survived the validness cutoff.
    #[error("no candidate elements survive validness cutoff {cutoff}; try a lower cutoff (e.g. 0.1)")]
    EmptyCandidates { cutoff: f64 },

    #[error("integer program is infeasible")]
    Infeasible,

    #[error("time limit of {seconds} s reached without a feasible solution")]
    Timeout { seconds: f64 },

    #[error("LP relaxation failed: {0}")]
    Solver(String),

    /// A document could not be read; `locus` names the offending record.
    #[error("parse error at {locus}: {message}")]
    Parse { locus: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Short machine-readable tag used by the CLI's error output.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Structural(_) => "structural",
            Error::Argument(_) => "argument",
            Error::Degenerate { .. } => "degenerate",
            Error::EmptyCandidates { .. } => "empty_candidates",
            Error::Infeasible => "infeasible",
            Error::Timeout { .. } => "timeout",
            Error::Solver(_) => "solver",
            Error::Parse { .. } => "parse",
            Error::Io(_) => "io",
        }
    }

    /// Remediation hint, when one exists.
    pub fn hint(&self) -> Option<&'static str> {
        match self {
            Error::EmptyCandidates { .. } => Some("relax the validness cutoff, e.g. --cutoff 0.1"),
            Error::Timeout { .. } => Some("raise --time-limit"),
            _ => None,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
