//! Batch front-end around `istd-core`: configuration, file formats,
//! synthetic sequences, and the subcommand flows used by the `istd` binary.

pub mod config;
pub mod io;
pub mod run;
pub mod synth;
