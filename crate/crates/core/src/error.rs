use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec::Vec;

/// A single record-level invariant violation, located by record index.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub index: usize,
    pub field: &'static str,
    pub message: String,
}

impl core::fmt::Display for Violation {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "record {}: field `{}`: {}", self.index, self.field, self.message)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("record `{id}` has no tokens")]
    EmptyTokens { id: String },

    #[error("record `{id}` has sigma = 0 at token {position}")]
    ZeroSigma { id: String, position: usize },

    #[error("reference unavailable for record `{id}`")]
    ReferenceUnavailable { id: String },

    #[error("record `{id}` has invalid zlib_len {len}")]
    InvalidZlibLen { id: String, len: u64 },

    #[error("record `{id}` is missing external score `{name}`")]
    MissingScore { id: String, name: String },

    #[error("{count} record(s) failed; first: `{}`: {}", .failures[0].0, .failures[0].1)]
    Records { count: usize, failures: Vec<(String, Error)> },

    #[error("input holds a single class; both labels are required")]
    SingleClass,

    #[error("platt fit did not converge after {iterations} iterations (gradient norm {grad_norm:e})")]
    NotConverged { iterations: usize, grad_norm: f64 },

    #[error("degenerate weights: sum of (1 - p_contam) is zero")]
    DegenerateWeights,

    #[error("item {index} is missing `{field}`")]
    MissingProbability { field: &'static str, index: usize },

    #[error("target AUROC {target} unreachable at concentration {kappa}; max achievable is {max_achievable:.6}")]
    UnreachableAuroc { target: f64, kappa: f64, max_achievable: f64 },

    #[error("unknown benchmark `{0}`")]
    UnknownBenchmark(String),

    #[error("benchmark `{benchmark}`: {what}")]
    MissingClass { benchmark: String, what: String },

    #[error("insufficient records for {what}: need {needed}, have {available}")]
    InsufficientPool { what: String, needed: usize, available: usize },

    #[error("difficulty bin is empty")]
    EmptyTercile,

    #[error("corpus has {} invariant violation(s); first: {}", .0.len(), .0[0])]
    InvalidCorpus(Vec<Violation>),

    #[error("replicate {index}: {source}")]
    Replicate { index: usize, source: Box<Error> },
}

pub type Result<T, E = Error> = core::result::Result<T, E>;

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
