//! File formats, configuration and statistics for the `lagtrack` solver.
//! The algorithms live in `lagtrack-core`.

pub mod config;
pub mod format;
pub mod stats;

pub use lagtrack_core;
