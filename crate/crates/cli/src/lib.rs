//! Std companion to `climpanel-core`: file formats, configuration,
//! synthetic fixtures, and the subcommand implementations behind the
//! `climpanel` binary. Core owns the numerics; everything here is IO,
//! orchestration, and error-to-exit-code policy.

pub mod commands;
pub mod config;
pub mod csvio;
pub mod error;
pub mod synth;
