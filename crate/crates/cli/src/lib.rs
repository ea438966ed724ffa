//! Experiment-runner library behind the `edgemig` binary.
//!
//! A single TOML spec declares a grid of simulator cells (node counts, trip
//! counts, request steps, policies), a workload source, and a seed list;
//! [`runner`] executes the grid, [`output`] writes event logs, summary
//! tables, plot data, and a manifest that reproduces the invocation byte
//! for byte.

pub mod output;
pub mod runner;
pub mod spec;
