use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("pole at ω = {omega} rad/s{}", index.map(|i| format!(" (grid index {i})")).unwrap_or_default())]
    PoleAtFrequency { omega: f64, index: Option<usize> },

    #[error("grid too coarse: {0}")]
    GridTooCoarse(String),

    #[error("grid too narrow: {0}")]
    GridTooNarrow(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("feedback loop is not stable (min |1+FG| = {min_return_difference:e}, winding number {winding})")]
    UnstableLoop { min_return_difference: f64, winding: i64 },

    #[error("circular wrap-around contamination: tail energy fraction {fraction:e} exceeds {limit:e}")]
    WraparoundContamination { fraction: f64, limit: f64 },

    #[error("signal maximum lies on the window boundary (index {index})")]
    PeakOnBoundary { index: usize },

    #[error("threshold {level} not crossed inside the edge window")]
    ThresholdNotCrossed { level: f64 },

    #[error("magnitude must be strictly positive (index {index}, value {value})")]
    NonpositiveMagnitude { index: usize, value: f64 },
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter { name, reason: reason.into() }
    }
}
