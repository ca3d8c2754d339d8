//! Core numerics for provincial climate-economics panels.
//!
//! The crate covers the full analysis chain from gridded weather to national
//! impact summaries:
//!
//! * [`weather`] — population-weighted aggregation of hourly grid temperature
//!   and daily precipitation into annual regressor sets (polynomial terms,
//!   temperature bins, degree days, precipitation controls).
//! * [`panel`] — two-way fixed-effects estimation of growth-weather response
//!   functions with cluster-robust covariance, distributed lags, income-group
//!   interactions, and response evaluation.
//! * [`selection`] — cross-validated choice among candidate binned
//!   specifications (out-of-time and leave-one-province-out RMSE).
//! * [`projection`] — province growth paths to 2090 under climate scenarios,
//!   with block-bootstrap uncertainty, bias correction, and income-regime
//!   switching.
//! * [`aggregation`] — regional and national impact ratios and distribution
//!   summaries.
//!
//! The crate is `no_std` (requires `alloc`); all state lives in plain data
//! structures and every operation is a pure function, so callers may farm
//! work out across threads freely. File formats and the command-line surface
//! live in the companion `climpanel` crate.

#![no_std]
#![deny(unsafe_code)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod aggregation;
pub mod error;
pub mod numeric;
pub mod panel;
pub mod projection;
pub mod selection;
pub mod weather;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = core::result::Result<T, Error>;
