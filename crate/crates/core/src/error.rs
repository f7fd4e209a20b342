use alloc::string::String;

/// Errors raised by domain construction, solvers and scans.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid shape: {0}")]
    InvalidShape(String),
    #[error("domain has no inside cells after discretization")]
    EmptyInterior,
    #[error("shape complement is empty")]
    EmptyComplement,
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("set is empty")]
    EmptySet,
    #[error("infeasible problem: {0}")]
    Infeasible(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("partition of unity vanishes at cell {cell}")]
    BrokenCover { cell: usize },
    #[error("degenerate input: {0}")]
    Degenerate(String),
}

pub type Result<T> = core::result::Result<T, Error>;

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
