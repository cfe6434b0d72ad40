//! Experiment pipeline around `epls-core`: binary formats, configuration,
//! reports, full training procedures, SVG trajectory plots and the CLI.

pub mod cli;
pub mod config;
pub mod experiment;
pub mod format;
pub mod model;
pub mod report;
pub mod viz;
