use thiserror::Error;

use crate::freqtab::ParseError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error(transparent)]
    Parse(#[from] ParseError),

    #[error("table has no singleton count (f_1 is required)")]
    NoSingletons,

    #[error("table is empty")]
    EmptyTable,

    #[error("no frequency ratios available (f_2 missing)")]
    NoRatios,

    #[error("insufficient structure: {0}")]
    InsufficientStructure(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("ratio function is singular at j = {j}")]
    Singularity { j: f64 },

    #[error("model ({p},{q}) needs at least {needed} ratios, got {got}")]
    InsufficientPoints {
        p: usize,
        q: usize,
        needed: usize,
        got: usize,
    },

    #[error("degenerate regression design")]
    DegenerateDesign,

    #[error("series does not converge at s = {s}")]
    Divergent { s: f64 },

    #[error("fitted b0 = {b0} is not positive")]
    NonPositiveB0 { b0: f64 },

    #[error("parameter covariance is not positive semi-definite")]
    NotPsd,

    #[error("fitted ratio is non-positive at j = {j}")]
    NonPositiveRatio { j: usize },

    #[error("no estimate: {0}")]
    NoEstimate(String),

    #[error("invalid configuration: {0}")]
    Config(String),
}
