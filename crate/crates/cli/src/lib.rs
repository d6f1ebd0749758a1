//! Batch experiments, iteration traces and scenario generation on top of the
//! `uav_relay` library.
//!
//! Output is plain CSV with a header row and units in column names, meant for
//! external plotting. Everything except `timings.csv` is a pure function of
//! the experiment spec.

pub mod error;
pub mod runner;
pub mod spec;
pub mod trace;

pub use error::{CliError, Result};
pub use runner::{run, RunOptions, RunOutcome, SummaryRow, TimingRow, TrialReport};
pub use spec::{ExperimentSpec, ScenarioSource, Scheme, Sweep, SweepVariable};
