//! Experiment runners behind the `dualstream` command-line tool.
//!
//! Every experiment reads a flat `key = value` [`settings::Settings`],
//! returns its rows in memory and, given an output directory, writes
//! fixed-column CSV files plus a `manifest.json`.

pub mod app;
pub mod common;
pub mod experiments;
pub mod settings;
