//! Two-loop joint positioning and power allocation.
//!
//! The blockage constraints are dualised with one multiplier per blocked
//! region. For fixed multipliers the inner loop alternates the closed-form
//! power allocation with the convex positioning step; the outer loop moves
//! the multipliers along the subgradient of the penalised binaries until
//! the Lagrangian bound and the best feasible value meet.
//!
//! All objective values here are in Mbps.

use log::{debug, warn};
use serde::Serialize;

use crate::channel::{link_rates, min_capacity_actual, Environment};
use crate::geometry::{big_m, first_unblocked, is_blocked, lowest_unblocked_above, prune_redundant, BlockedRegion};
use crate::power::{allocate, PowerAllocation};
use crate::sca::{self, Altitude, Blockage, Settings, Status, Subproblem};
use crate::scenario::Scenario;
use crate::{Error, Point3, Result, BPS_PER_MBPS};

/// Altitude step of the unblocked-start search.
pub const FALLBACK_STEP_M: f64 = 1.0;
/// Horizontal lattice spacing of the unblocked-start search.
pub const FALLBACK_SPACING_M: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LagrangianConfig {
    /// Inner loop stops once an iteration gains less than this.
    pub inner_tol_mbps: f64,
    /// Outer loop stops once `q_U - q_L` drops below this.
    pub outer_tol_mbps: f64,
    pub max_inner: usize,
    pub max_outer: usize,
    pub trust_shrink: f64,
    pub trust_radius_m: f64,
    pub lambda0: f64,
    pub mu0: f64,
    /// Altitude increment of the fallback search.
    pub fallback_step_m: f64,
    /// Horizontal lattice spacing of the fallback search when the column
    /// above the area centre is blocked throughout.
    pub fallback_spacing_m: f64,
    pub solver: Settings,
}

impl Default for LagrangianConfig {
    fn default() -> Self {
        Self {
            inner_tol_mbps: 0.01,
            outer_tol_mbps: 0.01,
            max_inner: 30,
            max_outer: 10,
            trust_shrink: 0.9,
            trust_radius_m: 50.0,
            lambda0: 1.0,
            mu0: 2.0,
            fallback_step_m: FALLBACK_STEP_M,
            fallback_spacing_m: FALLBACK_SPACING_M,
            solver: Settings::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LagrangianState {
    pub lambda: Vec<f64>,
    pub l: Vec<Vec<f64>>,
    pub x: Point3,
    pub mu: f64,
    /// Outer iterations completed.
    pub outer: usize,
    /// `q_U` of the previous outer iteration.
    pub last_q_u: Option<f64>,
}

impl LagrangianState {
    /// Multipliers at `lambda0`, binaries at `(|J| - 1) / |J|` and the UAV at
    /// the top of the area centre.
    pub fn initial(regions: &[BlockedRegion], scenario: &Scenario, config: &LagrangianConfig) -> Self {
        let (cx, cy) = scenario.bounds.center_xy();
        Self {
            lambda: vec![config.lambda0; regions.len()],
            l: regions
                .iter()
                .map(|r| {
                    let n = r.halfspaces.len() as f64;
                    vec![(n - 1.0) / n; r.halfspaces.len()]
                })
                .collect(),
            x: Point3::new(cx, cy, scenario.bounds.h_max),
            mu: config.mu0,
            outer: 0,
            last_q_u: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InnerRecord {
    pub outer: usize,
    pub inner: usize,
    pub x_m: f64,
    pub y_m: f64,
    pub z_m: f64,
    pub q_u_mbps: f64,
    pub rho_m: f64,
    pub step_m: f64,
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OuterRecord {
    pub outer: usize,
    pub q_u_mbps: f64,
    /// Best feasible objective found so far.
    pub q_l_mbps: f64,
    /// Objective at this iteration's position, zero when blocked.
    pub iterate_q_l_mbps: f64,
    pub lambda_l1: f64,
    pub lambda_max: f64,
    pub mu: f64,
    pub x_m: f64,
    pub y_m: f64,
    pub z_m: f64,
    pub inner_iterations: usize,
    pub blocked: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct IterationTrace {
    pub outer: Vec<OuterRecord>,
    pub inner: Vec<InnerRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub x: Point3,
    pub allocation: PowerAllocation,
    /// Max-min capacity in the actual LoS/NLoS environment, bit/s.
    pub min_capacity_bps: f64,
    /// The final position is outside every blocked region.
    pub feasible: bool,
    /// The outer loop closed the duality gap at an unblocked point.
    pub converged: bool,
    pub used_fallback: bool,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
}

/// `sum_i lambda_i sum_j l_ij (1 - l_ij)`.
pub fn penalty(lambda: &[f64], l: &[Vec<f64>]) -> f64 {
    lambda
        .iter()
        .zip(l)
        .map(|(lam, li)| lam * li.iter().map(|v| v * (1.0 - v)).sum::<f64>())
        .sum()
}

/// Max-min rate in Mbps at `x` for the given powers, LoS model on every link.
pub fn los_rate_mbps(x: Point3, p: &PowerAllocation, scenario: &Scenario) -> Result<f64> {
    Ok(link_rates(x, p, scenario, Environment::LosOnly)?.min_rate() / BPS_PER_MBPS)
}

/// Best feasible objective at `x` in bit/s: zero inside any blocked region,
/// otherwise the LoS max-min capacity with optimal powers.
pub fn evaluate_q_l(x: Point3, scenario: &Scenario, regions: &[BlockedRegion]) -> Result<f64> {
    if is_blocked(x, regions, scenario.bounds.eps_geo()) {
        return Ok(0.0);
    }
    let p = allocate(x, scenario)?;
    Ok(link_rates(x, &p, scenario, Environment::LosOnly)?.min_rate())
}

/// Subgradient step on the multipliers. `mu` is halved first when `q_u`
/// failed to drop below `prev_q_u`. Returns the new multipliers and `mu`.
pub fn update_multipliers(
    lambda: &[f64],
    mu: f64,
    l_bar: &[Vec<f64>],
    q_u: f64,
    q_l: f64,
    prev_q_u: Option<f64>,
) -> (Vec<f64>, f64) {
    let mu = match prev_q_u {
        Some(prev) if !(q_u < prev - 1e-9) => mu / 2.0,
        _ => mu,
    };
    let g: Vec<f64> = l_bar.iter().map(|li| li.iter().map(|v| v * (1.0 - v)).sum()).collect();
    let denom: f64 = g.iter().map(|v| v * v).sum();
    if denom == 0.0 {
        return (lambda.to_vec(), mu);
    }
    let gamma = mu * (q_u - q_l) / denom;
    let next = lambda
        .iter()
        .zip(&g)
        .map(|(lam, gi)| (lam + gamma * gi).max(0.0))
        .collect();
    (next, mu)
}

/// For a fixed position, the binaries of one region that minimise
/// `sum l (1 - l)` subject to the big-M rows, `sum l <= |J| - 1` and
/// `0 <= l <= 1`. The minimum of this concave function sits at a vertex, and
/// the vertices are enumerated directly.
pub fn polish_binaries(region: &BlockedRegion, x: Point3, big_m: f64, margin: f64) -> Vec<f64> {
    let lo: Vec<f64> = region
        .halfspaces
        .iter()
        .map(|h| ((h.offset + margin - h.normal.dot(x)) / big_m).clamp(0.0, 1.0))
        .collect();
    let n = lo.len();
    let cap = n as f64 - 1.0;
    let cost = |l: &[f64]| l.iter().map(|v| v * (1.0 - v)).sum::<f64>();
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut consider = |l: Vec<f64>| {
        if l.iter().sum::<f64>() <= cap + 1e-12 && l.iter().zip(&lo).all(|(v, b)| *v >= *b && *v <= 1.0) {
            let c = cost(&l);
            if best.as_ref().is_none_or(|(bc, _)| c < *bc) {
                best = Some((c, l));
            }
        }
    };
    for mask in 0u32..(1 << n) {
        let base: Vec<f64> = (0..n).map(|j| if mask & (1 << j) != 0 { 1.0 } else { lo[j] }).collect();
        consider(base.clone());
        for free in 0..n {
            let mut l = base.clone();
            let others: f64 = (0..n).filter(|&j| j != free).map(|j| l[j]).sum();
            l[free] = cap - others;
            consider(l);
        }
    }
    best.map(|(_, l)| l).unwrap_or(lo)
}

/// What the positioning step does about blockage.
#[derive(Debug, Clone, Copy)]
pub enum InnerMode<'a> {
    Relaxed { lambda: &'a [f64] },
    Frozen { l: &'a [Vec<f64>] },
    Ignored { altitude: Altitude },
}

/// One inner-loop run: the scenario, the regions in play and the mode.
#[derive(Debug, Clone, Copy)]
pub struct InnerProblem<'a> {
    pub scenario: &'a Scenario,
    pub regions: &'a [BlockedRegion],
    pub big_m: f64,
    pub config: &'a LagrangianConfig,
    pub mode: InnerMode<'a>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InnerOutcome {
    pub x: Point3,
    pub l: Vec<Vec<f64>>,
    pub allocation: PowerAllocation,
    pub q_u: f64,
    pub iterations: usize,
    /// Set when the positioning step reported an infeasible model.
    pub aborted: bool,
}

impl InnerProblem<'_> {
    fn objective(&self, x: Point3, l: &[Vec<f64>], p: &PowerAllocation) -> Result<f64> {
        let rate = los_rate_mbps(x, p, self.scenario)?;
        Ok(match self.mode {
            InnerMode::Relaxed { lambda } => rate - penalty(lambda, l),
            _ => rate,
        })
    }

    /// Alternates power allocation and the positioning step from `(x0, l0)`.
    /// Appends one record per iteration to `trace` with outer index `outer`.
    pub fn run(&self, x0: Point3, l0: &[Vec<f64>], outer: usize, trace: &mut Vec<InnerRecord>) -> Result<InnerOutcome> {
        let cfg = self.config;
        let mut x = x0;
        if let InnerMode::Ignored {
            altitude: Altitude::Fixed(z),
        } = self.mode
        {
            x.z = z;
        }
        let mut l = l0.to_vec();
        let mut p = allocate(x, self.scenario)?;
        let mut q = self.objective(x, &l, &p)?;
        let mut rho = cfg.trust_radius_m;
        let mut iterations = 0;
        let mut aborted = false;

        while iterations < cfg.max_inner {
            iterations += 1;
            let q_prev = q;
            // Power step.
            p = allocate(x, self.scenario)?;
            let q_power = self.objective(x, &l, &p)?;

            // Position step.
            let lin = sca::linearize(x, &l, &p, self.scenario, rho)?;
            let (altitude, blockage) = match self.mode {
                InnerMode::Relaxed { lambda } => (
                    Altitude::Free,
                    Blockage::Relaxed {
                        regions: self.regions,
                        lambda,
                        big_m: self.big_m,
                    },
                ),
                InnerMode::Frozen { l: frozen } => (
                    Altitude::Free,
                    Blockage::Frozen {
                        regions: self.regions,
                        l: frozen,
                        big_m: self.big_m,
                    },
                ),
                InnerMode::Ignored { altitude } => (altitude, Blockage::Ignored),
            };
            let sub = Subproblem {
                lin: &lin,
                blockage,
                bounds: &self.scenario.bounds,
                altitude,
            };
            let sol = sca::solve_subproblem(&sub, &cfg.solver);
            let rho_used = rho;
            rho *= cfg.trust_shrink;
            if matches!(sol.status, Status::Infeasible | Status::Unbounded) {
                warn!(
                    "positioning step returned {:?} at {:?}; keeping the anchor",
                    sol.status, x
                );
                q = q_power;
                aborted = true;
                trace.push(self.record(outer, iterations, x, q, rho_used, 0.0, false));
                break;
            }
            let q_pos = self.objective(sol.x, &sol.l, &p)?;
            // The surrogate minorises the objective, so a drop here is
            // solver noise; keep the anchor in that case.
            let accepted = q_pos >= q_power;
            let step = sol.x.distance(x);
            if accepted {
                x = sol.x;
                l = sol.l;
                q = q_pos;
            } else {
                debug!("rejected positioning step: {q_pos} < {q_power}");
                q = q_power;
            }
            trace.push(self.record(
                outer,
                iterations,
                x,
                q,
                rho_used,
                if accepted { step } else { 0.0 },
                accepted,
            ));
            if q - q_prev < cfg.inner_tol_mbps {
                break;
            }
        }

        // Final power step, then the exact binary step for the fixed position.
        p = allocate(x, self.scenario)?;
        if let InnerMode::Relaxed { lambda } = self.mode {
            let margin = self.scenario.bounds.eps_geo();
            for (i, region) in self.regions.iter().enumerate() {
                let polished = polish_binaries(region, x, self.big_m, margin);
                let before: f64 = l[i].iter().map(|v| v * (1.0 - v)).sum();
                let after: f64 = polished.iter().map(|v| v * (1.0 - v)).sum();
                if lambda[i] * after <= lambda[i] * before {
                    l[i] = polished;
                }
            }
        }
        let q_final = self.objective(x, &l, &p)?;
        Ok(InnerOutcome {
            x,
            l,
            allocation: p,
            q_u: q_final,
            iterations,
            aborted,
        })
    }

    #[allow(clippy::too_many_arguments)]
    fn record(
        &self,
        outer: usize,
        inner: usize,
        x: Point3,
        q: f64,
        rho: f64,
        step: f64,
        accepted: bool,
    ) -> InnerRecord {
        InnerRecord {
            outer,
            inner,
            x_m: x.x,
            y_m: x.y,
            z_m: x.z,
            q_u_mbps: q,
            rho_m: rho,
            step_m: step,
            accepted,
        }
    }
}

/// Runs one inner loop for the multipliers and anchor held in `state`.
pub fn inner_loop(
    state: &LagrangianState,
    scenario: &Scenario,
    regions: &[BlockedRegion],
    config: &LagrangianConfig,
    trace: &mut IterationTrace,
) -> Result<InnerOutcome> {
    let problem = InnerProblem {
        scenario,
        regions,
        big_m: big_m(regions, &scenario.bounds),
        config,
        mode: InnerMode::Relaxed { lambda: &state.lambda },
    };
    problem.run(state.x, &state.l, state.outer + 1, &mut trace.inner)
}

/// Lowest altitude above the area centre, scanning upward from `h_min` in
/// steps of `step`, at which the UAV is outside every blocked region.
pub fn lowest_unblocked_center(scenario: &Scenario, regions: &[BlockedRegion], step: f64) -> Result<Point3> {
    let b = &scenario.bounds;
    let (cx, cy) = b.center_xy();
    lowest_unblocked_above(cx, cy, b, regions, step).ok_or(Error::NoUnblockedAltitude { h_max: b.h_max })
}

/// Start of the fallback; see [`first_unblocked`].
pub fn fallback_start(scenario: &Scenario, regions: &[BlockedRegion], step: f64, spacing: f64) -> Result<Point3> {
    let b = &scenario.bounds;
    first_unblocked(b, regions, step, spacing).ok_or(Error::NoUnblockedAltitude { h_max: b.h_max })
}

/// Binaries that certify `x` lies outside each region: zero on the facet
/// with the largest slack, one elsewhere.
pub fn binaries_at(x: Point3, regions: &[BlockedRegion]) -> Vec<Vec<f64>> {
    regions
        .iter()
        .map(|r| {
            let best = r
                .halfspaces
                .iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |acc, (j, h)| {
                    let v = h.value(x);
                    if v > acc.1 {
                        (j, v)
                    } else {
                        acc
                    }
                })
                .0;
            (0..r.halfspaces.len())
                .map(|j| if j == best { 0.0 } else { 1.0 })
                .collect()
        })
        .collect()
}

/// Lagrangian value at `x` with optimal powers and the exact binary step.
fn lagrangian_value(
    x: Point3,
    lambda: &[f64],
    scenario: &Scenario,
    regions: &[BlockedRegion],
    big_m: f64,
) -> Result<f64> {
    let margin = scenario.bounds.eps_geo();
    let l: Vec<Vec<f64>> = regions.iter().map(|r| polish_binaries(r, x, big_m, margin)).collect();
    let allocation = allocate(x, scenario)?;
    Ok(los_rate_mbps(x, &allocation, scenario)? - penalty(lambda, &l))
}

/// Joint positioning and power allocation with default settings.
pub fn solve(scenario: &Scenario) -> Result<(Solution, IterationTrace)> {
    solve_with(scenario, &LagrangianConfig::default())
}

pub fn solve_with(scenario: &Scenario, config: &LagrangianConfig) -> Result<(Solution, IterationTrace)> {
    scenario.validate()?;
    let all_regions = scenario.blocked_regions()?;
    let regions = prune_redundant(&all_regions, &scenario.bounds);
    let m = big_m(&regions, &scenario.bounds);
    let eps = scenario.bounds.eps_geo();
    let mut state = LagrangianState::initial(&regions, scenario, config);
    let mut trace = IterationTrace::default();
    let mut inner_total = 0;

    // Best feasible point known so far with its objective in Mbps. It starts
    // at the initial position when that is unblocked and at the fallback
    // start otherwise.
    let seed = if is_blocked(state.x, &all_regions, eps) {
        fallback_start(
            scenario,
            &all_regions,
            config.fallback_step_m,
            config.fallback_spacing_m,
        )?
    } else {
        state.x
    };
    let mut best = (seed, evaluate_q_l(seed, scenario, &all_regions)? / BPS_PER_MBPS);
    let mut converged = false;

    while state.outer < config.max_outer {
        let outcome = inner_loop(&state, scenario, &regions, config, &mut trace)?;
        state.outer += 1;
        inner_total += outcome.iterations;
        let iterate_q_l = evaluate_q_l(outcome.x, scenario, &all_regions)? / BPS_PER_MBPS;
        let blocked = is_blocked(outcome.x, &all_regions, eps);
        // The inner loop is a local ascent and can end below the value the
        // best feasible point attains in the same Lagrangian; the bound is
        // the best value found for these multipliers.
        let q_u = outcome
            .q_u
            .max(lagrangian_value(best.0, &state.lambda, scenario, &regions, m)?);
        if !blocked && iterate_q_l > best.1 {
            best = (outcome.x, iterate_q_l);
        }
        let q_l = best.1;
        trace.outer.push(OuterRecord {
            outer: state.outer,
            q_u_mbps: q_u,
            q_l_mbps: q_l,
            iterate_q_l_mbps: iterate_q_l,
            lambda_l1: state.lambda.iter().sum(),
            lambda_max: state.lambda.iter().copied().fold(0.0, f64::max),
            mu: state.mu,
            x_m: outcome.x.x,
            y_m: outcome.x.y,
            z_m: outcome.x.z,
            inner_iterations: outcome.iterations,
            blocked,
        });
        debug!("outer {}: q_U = {q_u}, q_L = {q_l}, blocked = {blocked}", state.outer);
        state.x = outcome.x;
        state.l = outcome.l.clone();
        if q_u - q_l < config.outer_tol_mbps {
            converged = true;
            break;
        }
        let (lambda, mu) = update_multipliers(&state.lambda, state.mu, &outcome.l, q_u, q_l, state.last_q_u);
        state.lambda = lambda;
        state.mu = mu;
        state.last_q_u = Some(q_u);
    }
    let outer_iterations = state.outer;

    // With the gap closed the answer is the best feasible point; otherwise
    // the fallback restarts from the lowest unblocked point above the area
    // centre. Either way the binaries certified there are frozen and
    // position and powers are re-optimised.
    let start = if converged {
        best.0
    } else {
        fallback_start(
            scenario,
            &all_regions,
            config.fallback_step_m,
            config.fallback_spacing_m,
        )?
    };
    let frozen = binaries_at(start, &regions);
    let problem = InnerProblem {
        scenario,
        regions: &regions,
        big_m: m,
        config,
        mode: InnerMode::Frozen { l: &frozen },
    };
    let out = problem.run(start, &frozen, outer_iterations + 1, &mut trace.inner)?;
    inner_total += out.iterations;
    let mut x = start;
    if !is_blocked(out.x, &all_regions, eps)
        && evaluate_q_l(out.x, scenario, &all_regions)? >= evaluate_q_l(start, scenario, &all_regions)?
    {
        x = out.x;
    } else {
        warn!("refinement from {start:?} did not improve; keeping its start point");
    }
    let allocation = allocate(x, scenario)?;
    let min_capacity_bps = min_capacity_actual(x, &allocation, scenario)?;
    Ok((
        Solution {
            x,
            feasible: !is_blocked(x, &all_regions, eps),
            allocation,
            min_capacity_bps,
            converged,
            used_fallback: !converged,
            outer_iterations,
            inner_iterations: inner_total,
        },
        trace,
    ))
}
