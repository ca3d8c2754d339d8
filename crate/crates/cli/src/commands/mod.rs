//! Subcommand implementations. Each command is a plain function over typed
//! arguments so the pipeline driver and tests can call them directly; the
//! binary's argument parser lives in `main.rs`.

pub mod aggregate;
pub mod fit;
pub mod pipeline;
pub mod project;
pub mod report;
pub mod select_spec;
pub mod validate;
