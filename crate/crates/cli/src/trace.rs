//! Iteration traces of a single solve.

use std::fs;
use std::path::Path;

use serde::Serialize;
use uav_relay::lagrangian::{solve, IterationTrace, Solution};
use uav_relay::scenario::Scenario;
use uav_relay::BPS_PER_MBPS;

use crate::runner::write_csv;
use crate::{CliError, Result};

pub const OUTER_CSV: &str = "outer.csv";
/// Inner iterations in order; the position columns form the flight path.
pub const INNER_CSV: &str = "inner.csv";
pub const SOLUTION_CSV: &str = "solution.csv";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolutionRow {
    pub x_m: f64,
    pub y_m: f64,
    pub z_m: f64,
    pub min_capacity_mbps: f64,
    pub bs_power_w: f64,
    pub uav_power_w: f64,
    pub converged: bool,
    pub used_fallback: bool,
    pub feasible: bool,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
}

impl From<&Solution> for SolutionRow {
    fn from(s: &Solution) -> Self {
        Self {
            x_m: s.x.x,
            y_m: s.x.y,
            z_m: s.x.z,
            min_capacity_mbps: s.min_capacity_bps / BPS_PER_MBPS,
            bs_power_w: s.allocation.bs,
            uav_power_w: s.allocation.uav_total(),
            converged: s.converged,
            used_fallback: s.used_fallback,
            feasible: s.feasible,
            outer_iterations: s.outer_iterations,
            inner_iterations: s.inner_iterations,
        }
    }
}

/// Solves `scenario` and writes the outer and inner traces and the final
/// solution to `out_dir`.
pub fn trace(scenario: &Scenario, out_dir: &Path) -> Result<(Solution, IterationTrace)> {
    fs::create_dir_all(out_dir).map_err(CliError::io(out_dir))?;
    let (sol, tr) = solve(scenario)?;
    write_csv(&out_dir.join(OUTER_CSV), &tr.outer)?;
    write_csv(&out_dir.join(INNER_CSV), &tr.inner)?;
    write_csv(&out_dir.join(SOLUTION_CSV), &[SolutionRow::from(&sol)])?;
    Ok((sol, tr))
}
