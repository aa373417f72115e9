//! Crate-wide error type.
//!
//! Variants are grouped by how callers are expected to react: invalid inputs
//! (caller bug or bad config), capacity limits, infeasibility certificates, and
//! construction failures that a caller may retry with different constants.

use crate::feasibility::FeasibleState;

/// Errors produced by the toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A parameter violates a documented precondition.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A link set is too large for exhaustive family enumeration.
    #[error("link set of size {got} exceeds the enumeration cap of {cap}")]
    EnumerationCap { got: usize, cap: usize },

    /// A state family misses a subset of one of its members.
    #[error("family is not downward closed: contains {state:?} but not {missing:?}")]
    NotDownwardClosed {
        state: FeasibleState,
        missing: FeasibleState,
    },

    /// A conflict graph was requested for a model whose constraints are not
    /// pairwise.
    #[error("conflict graph undefined for aggregate model {model}")]
    AggregateConflictGraph { model: &'static str },

    /// A link can never be active under the governing family, so any positive
    /// demand on it is unservable.
    #[error("link {link} is infeasible even in isolation; demanded rate {target} is unservable")]
    UnschedulableLink { link: usize, target: f64 },

    /// Demanded rates exceed what any schedule can deliver: the listed links
    /// are mutually exclusive, so their rates must sum to strictly less
    /// than one.
    #[error(
        "demanded rates are not realizable with slack: mutually exclusive links {clique:?} \
         have total demand {total}"
    )]
    InfeasibleTargets { clique: Vec<u32>, total: f64 },

    /// The rate-fitting dual ascent ran out of iterations, which indicates
    /// demands on (or beyond) the capacity boundary.
    #[error("rate fitting did not converge within {iterations} iterations (max violation {max_violation})")]
    FitDidNotConverge { iterations: usize, max_violation: f64 },

    /// A slab of cells contains no crossing path of occupied cells, so no
    /// highway can be built through it. Retry with a larger cell side.
    #[error("no {orientation} crossing path in slab {slab}; larger cells (c1) may be needed")]
    PercolationFailure {
        orientation: &'static str,
        slab: usize,
    },

    /// A node has no backbone node within the association radius. Retry with
    /// a larger association range (c2).
    #[error("node {node} has no backbone node within association radius {radius}")]
    AssociationFailure { node: u32, radius: f64 },

    /// Two highway paths that must cross share no cell; the path extraction
    /// violated its crossing guarantee.
    #[error("highway paths {horizontal} and {vertical} share no junction cell")]
    MissingJunction { horizontal: usize, vertical: usize },

    /// An emitted schedule state falls outside the family it must satisfy,
    /// meaning the reuse constants are too aggressive.
    #[error("schedule slot {slot} violates the {family} family: state {state:?}")]
    CertificationFailure {
        slot: usize,
        family: String,
        state: FeasibleState,
    },

    /// JSON (de)serialization failure.
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    /// I/O failure.
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// True for errors that signal a failed geometric construction (as opposed
    /// to bad inputs or property violations); callers may retry these with
    /// adjusted constants.
    pub fn is_construction_failure(&self) -> bool {
        matches!(
            self,
            Error::PercolationFailure { .. }
                | Error::AssociationFailure { .. }
                | Error::MissingJunction { .. }
                | Error::CertificationFailure { .. }
        )
    }
}
