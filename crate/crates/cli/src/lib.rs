//! Experiment runner: configuration plus the staged commands (synth,
//! train, attribute, sweep, evaluate, report) that fill a run directory.

pub mod config;
pub mod run;
