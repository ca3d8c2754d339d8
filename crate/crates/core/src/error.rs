//! Error type shared by every module in the crate.

use alloc::string::String;

/// All failure modes of the core pipeline.
///
/// Data-shape problems (missing records, bad weights) are distinguished from
/// numerical failures (non-convergence, rank deficiency) so that callers can
/// map them onto different exit codes.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// A grid cell lacks hourly coverage for a requested date.
    #[error("missing hourly data for cell {cell} on {date}")]
    MissingData { cell: String, date: String },

    /// Cell or population weights do not normalize to one.
    #[error("weights for {scope} sum to {sum}, expected 1")]
    InvalidWeights { scope: String, sum: f64 },

    /// Bin edge list empty or not strictly ascending.
    #[error("invalid bin edges: {reason}")]
    InvalidBins { reason: String },

    /// Out-of-range or non-finite input value.
    #[error("invalid data: {reason}")]
    InvalidData { reason: String },

    /// Not enough rows to build the requested design.
    #[error("too few observations: {reason}")]
    TooFewObservations { reason: String },

    /// Alternating demeaning failed to settle within the sweep budget.
    #[error("fixed-effect absorption did not converge after {sweeps} sweeps (last change {last_change:e})")]
    ConvergenceFailure { sweeps: usize, last_change: f64 },

    /// Design matrix is rank deficient after absorption.
    #[error("collinear design: {columns}")]
    CollinearDesign { columns: String },

    /// Fewer than two clusters, or an interaction group too small to cluster.
    #[error("degenerate clustering: {reason}")]
    DegenerateClustering { reason: String },

    /// Group cross-validation requires at least two provinces.
    #[error("too few groups: {reason}")]
    TooFewGroups { reason: String },

    /// A baseline averaging window has no observations.
    #[error("missing baseline: {reason}")]
    MissingBaseline { reason: String },

    /// Requested year lies outside a scenario path.
    #[error("year {year} outside {what}")]
    OutOfRange { year: i32, what: String },

    /// A regional aggregate is missing one of its member provinces.
    #[error("incomplete region {region}: missing province {province}")]
    IncompleteRegion { region: String, province: String },
}
