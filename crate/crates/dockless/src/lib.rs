//! File formats, parallel sweeps, reports and the command-line driver
//! around `dockless-core`.

pub mod cli;
pub mod config;
pub mod io;
pub mod manifest;
pub mod report;
pub mod stats;
pub mod sweep;
