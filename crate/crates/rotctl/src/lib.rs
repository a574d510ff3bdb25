//! Command-line companion to `rotctl-core`: scenario files, run artifacts and
//! batch sweeps.

pub mod commands;
pub mod output;
pub mod scenario;
