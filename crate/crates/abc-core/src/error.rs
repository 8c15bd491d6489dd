//! Error type shared across the crate.
//!
//! Everything that can go wrong is an explicit variant; panics are reserved
//! for internal invariant violations (a constructed permutation failing to be
//! a bijection is a bug, not an input error).

use thiserror::Error;

#[derive(Debug, Error)]
pub enum AbcError {
    /// Configuration rejected before any computation (CLI exit code 2).
    #[error("config error: {0}")]
    Config(String),

    /// A divisibility or positivity condition on stage parameters failed.
    #[error("parameter condition violated: {0}")]
    Parameter(String),

    /// A requested exact grid exceeds the configured cell budget.
    #[error("grid of {cells} cells exceeds the budget of {budget}")]
    Budget { cells: u128, budget: u128 },

    /// Translation or step values do not align with the grid, so the map is
    /// not a cell permutation at this resolution.
    #[error("grid incompatibility: {0}")]
    GridIncompatible(String),

    /// A mollification request that no admissible kernel width satisfies.
    /// Carries the sharpest values this implementation can honour.
    #[error(
        "mollifier out of range: requested eps={requested_eps:.3e}, delta={requested_delta:.3e}; \
         achievable eps>={achievable_eps:.3e} at delta={requested_delta:.3e} \
         (or delta>={achievable_delta:.3e} at the requested eps)"
    )]
    MollifyRange {
        requested_eps: f64,
        requested_delta: f64,
        achievable_eps: f64,
        achievable_delta: f64,
    },

    /// choose_kn exhausted its search ceiling without meeting the budget.
    #[error("k search exhausted at k=2^{ceiling_log2}: {detail}")]
    KSearchExhausted { ceiling_log2: u32, detail: String },

    /// I/O or serialization problems while writing artifacts.
    #[error("artifact error: {0}")]
    Artifact(String),
}

impl From<std::io::Error> for AbcError {
    fn from(e: std::io::Error) -> Self {
        AbcError::Artifact(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, AbcError>;
