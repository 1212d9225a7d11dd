use thiserror::Error;

use crate::strain::TuningCurve;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("grid too coarse: step {step} ns exceeds {limit} ns")]
    GridTooCoarse { step: f64, limit: f64 },

    #[error("grid does not cover {needed_lo}..{needed_hi} (grid spans {lo}..{hi})")]
    GridCoverage {
        lo: f64,
        hi: f64,
        needed_lo: f64,
        needed_hi: f64,
    },

    #[error("empty window: {0}")]
    EmptyWindow(String),

    #[error("normalization plateau has {nonzero} nonzero bins, need at least {required}")]
    EmptyPlateau { nonzero: usize, required: usize },

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("fit failed: {0}")]
    FitFailure(String),

    #[error("plant destroyed; exposures are rejected")]
    PlantDestroyed,

    #[error("destruction: power {power} mW exceeds limit {limit} mW at site {site} um")]
    Destruction { power: f64, limit: f64, site: f64 },

    /// Destruction during a calibration ramp; carries the curve recorded up
    /// to the last surviving pulse.
    #[error("ramp destroyed the plant at {power} mW (limit {limit} mW)")]
    RampDestroyed {
        power: f64,
        limit: f64,
        partial: Box<TuningCurve>,
    },

    #[error("unreachable target: {target} ueV is red of current energy {current} ueV; use Stark detuning or another emitter")]
    UnreachableTarget { target: f64, current: f64 },

    #[error("exposure budget of {budget} exhausted")]
    BudgetExhausted { budget: usize },

    #[error("infeasible layout: kernel coupling {coupling:.3} between emitters {a} and {b} exceeds 0.5")]
    InfeasibleLayout { a: usize, b: usize, coupling: f64 },

    #[error("replay mismatch at record {record}, emitter {emitter}: journal {logged} ueV, replay {replayed} ueV")]
    ReplayMismatch {
        record: usize,
        emitter: usize,
        logged: f64,
        replayed: f64,
    },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Short category tag used by front-ends for error lines.
    pub fn category(&self) -> &'static str {
        match self {
            Error::InvalidParameter(_) => "invalid-parameter",
            Error::GridTooCoarse { .. } | Error::GridCoverage { .. } => "grid",
            Error::EmptyWindow(_) | Error::EmptyPlateau { .. } => "data",
            Error::DegenerateData(_) => "data",
            Error::FitFailure(_) => "fit",
            Error::PlantDestroyed
            | Error::Destruction { .. }
            | Error::RampDestroyed { .. } => "destruction",
            Error::UnreachableTarget { .. } => "unreachable-target",
            Error::BudgetExhausted { .. } => "budget",
            Error::InfeasibleLayout { .. } => "layout",
            Error::ReplayMismatch { .. } => "replay",
            Error::Parse { .. } => "parse",
            Error::Io(_) => "io",
        }
    }
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
