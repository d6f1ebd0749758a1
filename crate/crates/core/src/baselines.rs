//! Comparison schemes: exhaustive lattice searches, the blockage-aware
//! centre heuristic and the blockage-unaware optimiser.

use rayon::prelude::*;
use serde::Serialize;

use crate::channel::min_capacity_actual;
use crate::geometry::{AreaBounds, BlockedRegion};
use crate::lagrangian::{lowest_unblocked_center, InnerMode, InnerProblem, LagrangianConfig};
use crate::power::{allocate, PowerAllocation};
use crate::sca::Altitude;
use crate::scenario::Scenario;
use crate::{Error, Point3, Result};

/// Default altitude of the fixed-altitude schemes.
pub const DEFAULT_FIXED_ALTITUDE_M: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SchemeId {
    Es3d,
    Es2d,
    Center,
    Free,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineResult {
    pub scheme: SchemeId,
    pub x: Point3,
    pub allocation: PowerAllocation,
    /// Actual-environment max-min capacity, bit/s.
    pub min_capacity_bps: f64,
    pub spacing_m: Option<f64>,
    pub altitude_m: Option<f64>,
}

/// Optimal powers at `x` and the resulting actual-environment capacity.
pub fn evaluate_position(x: Point3, scenario: &Scenario) -> Result<(PowerAllocation, f64)> {
    let p = allocate(x, scenario)?;
    let c = min_capacity_actual(x, &p, scenario)?;
    Ok((p, c))
}

pub use crate::geometry::lattice_axis;

fn check_spacing(spacing: f64) -> Result<()> {
    if spacing.is_finite() && spacing > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "lattice spacing {spacing} must be positive"
        )))
    }
}

/// Best lattice point; ties go to the lowest `(z, y, x)`.
fn search(scenario: &Scenario, xs: &[f64], ys: &[f64], zs: &[f64]) -> Result<(Point3, PowerAllocation, f64)> {
    let (nx, ny) = (xs.len(), ys.len());
    let total = nx * ny * zs.len();
    if total == 0 {
        return Err(Error::EmptyLattice("no lattice points".into()));
    }
    // Index order is z-major, so a smaller index is a smaller (z, y, x).
    let best = (0..total)
        .into_par_iter()
        .map(|idx| {
            let x = Point3::new(xs[idx % nx], ys[(idx / nx) % ny], zs[idx / (nx * ny)]);
            evaluate_position(x, scenario).map(|(_, c)| (c, idx))
        })
        .try_reduce(
            || (f64::NEG_INFINITY, usize::MAX),
            |a, b| {
                let pick_b = b.0 > a.0 || (b.0 == a.0 && b.1 < a.1);
                Ok(if pick_b { b } else { a })
            },
        )?;
    let idx = best.1;
    let x = Point3::new(xs[idx % nx], ys[(idx / nx) % ny], zs[idx / (nx * ny)]);
    let (p, c) = evaluate_position(x, scenario)?;
    Ok((x, p, c))
}

/// Exhaustive search over `[0, x_D] x [0, y_D] x [h_min, h_max]`.
pub fn es3d(scenario: &Scenario, spacing: f64) -> Result<BaselineResult> {
    check_spacing(spacing)?;
    let b: &AreaBounds = &scenario.bounds;
    let xs = lattice_axis(0.0, b.x_d, spacing);
    let ys = lattice_axis(0.0, b.y_d, spacing);
    let zs = lattice_axis(b.h_min, b.h_max, spacing);
    let (x, allocation, min_capacity_bps) = search(scenario, &xs, &ys, &zs)?;
    Ok(BaselineResult {
        scheme: SchemeId::Es3d,
        x,
        allocation,
        min_capacity_bps,
        spacing_m: Some(spacing),
        altitude_m: None,
    })
}

/// Exhaustive search over the horizontal lattice at altitude `h`.
pub fn es2d(scenario: &Scenario, h: f64, spacing: f64) -> Result<BaselineResult> {
    check_spacing(spacing)?;
    let b = &scenario.bounds;
    if !(h >= b.h_min && h <= b.h_max) {
        return Err(Error::InvalidParameter(format!(
            "altitude {h} outside [{}, {}]",
            b.h_min, b.h_max
        )));
    }
    let xs = lattice_axis(0.0, b.x_d, spacing);
    let ys = lattice_axis(0.0, b.y_d, spacing);
    let (x, allocation, min_capacity_bps) = search(scenario, &xs, &ys, &[h])?;
    Ok(BaselineResult {
        scheme: SchemeId::Es2d,
        x,
        allocation,
        min_capacity_bps,
        spacing_m: Some(spacing),
        altitude_m: Some(h),
    })
}

/// Area centre at the lowest unblocked altitude, found in 1 m steps. When
/// the whole column is blocked, the lowest point crossed by the fewest
/// blocked regions is used instead.
pub fn center(scenario: &Scenario) -> Result<BaselineResult> {
    let regions = scenario.blocked_regions()?;
    let x = match lowest_unblocked_center(scenario, &regions, 1.0) {
        Err(Error::NoUnblockedAltitude { .. }) => least_blocked_center(scenario, &regions, 1.0),
        other => other?,
    };
    let (allocation, min_capacity_bps) = evaluate_position(x, scenario)?;
    Ok(BaselineResult {
        scheme: SchemeId::Center,
        x,
        allocation,
        min_capacity_bps,
        spacing_m: None,
        altitude_m: Some(x.z),
    })
}

fn least_blocked_center(scenario: &Scenario, regions: &[BlockedRegion], step: f64) -> Point3 {
    let b = &scenario.bounds;
    let (cx, cy) = b.center_xy();
    let eps = b.eps_geo();
    let steps = ((b.h_max - b.h_min) / step + 1e-9).floor() as u32;
    (0..=steps)
        .map(|i| Point3::new(cx, cy, (b.h_min + f64::from(i) * step).min(b.h_max)))
        .map(|x| (regions.iter().filter(|r| r.contains(x, eps)).count(), x))
        .min_by_key(|(n, _)| *n)
        .map(|(_, x)| x)
        .expect("column has at least one point")
}

/// Alternating power and position optimisation at altitude `h` as if every
/// link were line-of-sight, scored in the actual environment.
pub fn free(scenario: &Scenario, h: f64) -> Result<BaselineResult> {
    free_with(scenario, h, &LagrangianConfig::default())
}

pub fn free_with(scenario: &Scenario, h: f64, config: &LagrangianConfig) -> Result<BaselineResult> {
    let b = &scenario.bounds;
    if !(h >= b.h_min && h <= b.h_max) {
        return Err(Error::InvalidParameter(format!(
            "altitude {h} outside [{}, {}]",
            b.h_min, b.h_max
        )));
    }
    let problem = InnerProblem {
        scenario,
        regions: &[],
        big_m: 0.0,
        config,
        mode: InnerMode::Ignored {
            altitude: Altitude::Fixed(h),
        },
    };
    let (cx, cy) = b.center_xy();
    let out = problem.run(Point3::new(cx, cy, h), &[], 1, &mut Vec::new())?;
    let min_capacity_bps = min_capacity_actual(out.x, &out.allocation, scenario)?;
    Ok(BaselineResult {
        scheme: SchemeId::Free,
        x: out.x,
        allocation: out.allocation,
        min_capacity_bps,
        spacing_m: None,
        altitude_m: Some(h),
    })
}
