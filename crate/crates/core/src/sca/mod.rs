//! Convex positioning step for fixed transmit powers.
//!
//! Each capacity `R(d) = W log2(1 + zeta / d^alpha)` is convex and decreasing
//! in the link distance `d`, so its tangent at the anchor distance is a
//! global under-estimator: `R(d) >= A - B (d - d_t)`. Replacing every rate by
//! that tangent and the concave `l^2` terms of the relaxed binaries by their
//! tangents gives a second-order cone program whose solutions are feasible
//! for the original constraints.
//!
//! Rates and objectives inside this module are in Mbps.

pub mod cone;

use std::f64::consts::LN_2;

use crate::geometry::{AreaBounds, BlockedRegion};
use crate::power::PowerAllocation;
use crate::scenario::Scenario;
use crate::{Error, Point3, Result, BPS_PER_MBPS};

use cone::{ConeProgram, LpRow, SocConstraint};
pub use cone::{Settings, Status};

/// Tangent lower bound of one link capacity in the link distance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkBound {
    pub endpoint: Point3,
    /// Received SNR at 1 m: `P beta / (N0 W)`.
    pub zeta: f64,
    pub alpha: f64,
    pub bandwidth: f64,
    pub anchor_distance: f64,
    /// Capacity at the anchor (`A`), Mbps.
    pub value: f64,
    /// Magnitude of the capacity slope at the anchor (`B`), Mbps per meter.
    pub slope: f64,
}

impl LinkBound {
    fn new(endpoint: Point3, anchor: Point3, power: f64, bandwidth: f64, scenario: &Scenario) -> Result<Self> {
        let ch = &scenario.channel;
        let d = anchor.distance(endpoint);
        if d == 0.0 {
            return Err(Error::ZeroDistance(endpoint));
        }
        let zeta = power * ch.beta_los / (ch.noise_psd * bandwidth);
        let alpha = ch.alpha_los;
        let da = d.powf(alpha);
        let value = bandwidth * (zeta / da).ln_1p() / LN_2 / BPS_PER_MBPS;
        let slope = bandwidth * zeta * alpha / (d * (da + zeta) * LN_2) / BPS_PER_MBPS;
        Ok(Self {
            endpoint,
            zeta,
            alpha,
            bandwidth,
            anchor_distance: d,
            value,
            slope,
        })
    }

    /// Exact LoS capacity at `x`, Mbps.
    pub fn rate(&self, x: Point3) -> f64 {
        let d = x.distance(self.endpoint);
        self.bandwidth * (self.zeta / d.powf(self.alpha)).ln_1p() / LN_2 / BPS_PER_MBPS
    }

    /// Tangent under-estimate at `x`, Mbps.
    pub fn lower_bound(&self, x: Point3) -> f64 {
        self.value - self.slope * (x.distance(self.endpoint) - self.anchor_distance)
    }
}

/// Everything the positioning step needs from the current anchor.
#[derive(Debug, Clone, PartialEq)]
pub struct SubproblemLinearization {
    pub anchor: Point3,
    /// Relaxed binaries at the anchor, one vector per blocked region.
    pub l_anchor: Vec<Vec<f64>>,
    /// Trust-region radius, meters.
    pub rho: f64,
    pub backhaul: LinkBound,
    pub access: Vec<LinkBound>,
}

impl SubproblemLinearization {
    /// Tangent bound on the max-min rate at `x`, Mbps.
    pub fn rate_lower_bound(&self, x: Point3) -> f64 {
        let k = self.access.len() as f64;
        self.access
            .iter()
            .map(|b| b.lower_bound(x))
            .fold(self.backhaul.lower_bound(x) / k, f64::min)
    }
}

pub fn linearize(
    x_t: Point3,
    l_t: &[Vec<f64>],
    powers: &PowerAllocation,
    scenario: &Scenario,
    rho: f64,
) -> Result<SubproblemLinearization> {
    if !(rho > 0.0) {
        return Err(Error::InvalidParameter(format!("trust radius {rho} must be positive")));
    }
    let ch = &scenario.channel;
    let backhaul = LinkBound::new(scenario.bs, x_t, powers.bs, ch.bandwidth_bs, scenario)?;
    let access = scenario
        .ues
        .iter()
        .zip(&powers.ues)
        .map(|(&ue, &p)| LinkBound::new(ue, x_t, p, ch.bandwidth_ue, scenario))
        .collect::<Result<_>>()?;
    Ok(SubproblemLinearization {
        anchor: x_t,
        l_anchor: l_t.to_vec(),
        rho,
        backhaul,
        access,
    })
}

/// Margin by which the positioning step keeps the UAV outside a facet:
/// twice the membership tolerance, so a solution sitting on the constraint
/// boundary is still classified as unblocked.
pub fn facet_margin(bounds: &AreaBounds) -> f64 {
    2.0 * bounds.eps_geo()
}

/// Penalty tangent `l - 2 l_t l + l_t^2`, an over-estimate of `l (1 - l)`.
pub fn penalty_bound(l: f64, l_t: f64) -> f64 {
    l - 2.0 * l_t * l + l_t * l_t
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Altitude {
    Free,
    Fixed(f64),
}

/// How blocked regions enter the positioning step.
#[derive(Debug, Clone, Copy)]
pub enum Blockage<'a> {
    Ignored,
    /// Relaxed binaries in `[0, 1]` with multiplier-weighted penalties.
    Relaxed {
        regions: &'a [BlockedRegion],
        lambda: &'a [f64],
        big_m: f64,
    },
    /// Binaries held at the given values; only facets with `l < 1` constrain.
    Frozen {
        regions: &'a [BlockedRegion],
        l: &'a [Vec<f64>],
        big_m: f64,
    },
}

#[derive(Debug, Clone, Copy)]
pub struct Subproblem<'a> {
    pub lin: &'a SubproblemLinearization,
    pub blockage: Blockage<'a>,
    pub bounds: &'a AreaBounds,
    pub altitude: Altitude,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvexSolution {
    pub x: Point3,
    /// Relaxed binaries; equal to the anchor values unless relaxed.
    pub l: Vec<Vec<f64>>,
    /// Rate variable at the optimum, Mbps.
    pub rate_mbps: f64,
    /// Surrogate objective `R - sum lambda * penalty_bound`, Mbps.
    pub objective: f64,
    pub status: Status,
    pub iterations: usize,
}

/// Affine expression `c0 + spatial . x_scaled + rate * R`.
#[derive(Clone, Copy, Default)]
struct Affine {
    c0: f64,
    spatial: [f64; 3],
    rate: f64,
}

struct Builder {
    scale: f64,
    altitude: Altitude,
}

impl Builder {
    fn n_global(&self) -> usize {
        match self.altitude {
            Altitude::Free => 4,
            Altitude::Fixed(_) => 3,
        }
    }

    fn rate_index(&self) -> usize {
        self.n_global() - 1
    }

    /// Row `(G, h)` with `h - G v` equal to the expression.
    fn lower(&self, e: Affine) -> (Vec<f64>, f64) {
        let mut g = vec![0.0; self.n_global()];
        let mut h = e.c0;
        g[0] = -e.spatial[0];
        g[1] = -e.spatial[1];
        match self.altitude {
            Altitude::Free => g[2] = -e.spatial[2],
            Altitude::Fixed(z) => h += e.spatial[2] * z / self.scale,
        }
        g[self.rate_index()] = -e.rate;
        (g, h)
    }

    /// Cone `t >= ||x - p||` in scaled coordinates, with `t` affine.
    fn distance_cone(&self, t: Affine, p: Point3) -> SocConstraint {
        let mut g = Vec::with_capacity(4);
        let mut h = Vec::with_capacity(4);
        let (g0, h0) = self.lower(t);
        g.push(g0);
        h.push(h0);
        let pa = p.to_array();
        for (d, &pd) in pa.iter().enumerate() {
            let mut e = Affine {
                c0: -pd / self.scale,
                ..Affine::default()
            };
            e.spatial[d] = 1.0;
            let (gd, hd) = self.lower(e);
            g.push(gd);
            h.push(hd);
        }
        SocConstraint { g, h }
    }

    fn lp(&self, e: Affine) -> LpRow {
        let (global, h) = self.lower(e);
        LpRow {
            global,
            block: None,
            local: Vec::new(),
            h,
        }
    }
}

/// Assembles the cone program. Returns it with the blocked-region indices
/// that own a local variable block.
fn build(sub: &Subproblem) -> (ConeProgram, Builder, Vec<usize>) {
    let lin = sub.lin;
    let bounds = sub.bounds;
    let ls = bounds.x_d.max(bounds.y_d).max(bounds.h_max).max(1.0);
    let b = Builder {
        scale: ls,
        altitude: sub.altitude,
    };
    let ng = b.n_global();
    let eps = facet_margin(bounds);
    let k = lin.access.len() as f64;
    let mut prog = ConeProgram {
        n_global: ng,
        ..ConeProgram::default()
    };
    let mut c = vec![0.0; ng];
    c[b.rate_index()] = -1.0;

    // Rate cones: (A + B d_t - w R) / (B ls) >= ||x - p|| / ls.
    let link = |lb: &LinkBound, weight: f64| {
        let t = Affine {
            c0: (lb.value + lb.slope * lb.anchor_distance) / (lb.slope * ls),
            spatial: [0.0; 3],
            rate: -weight / (lb.slope * ls),
        };
        b.distance_cone(t, lb.endpoint)
    };
    prog.soc.push(link(&lin.backhaul, k));
    for lb in &lin.access {
        prog.soc.push(link(lb, 1.0));
    }
    // Trust region.
    let mut anchor = lin.anchor;
    if let Altitude::Fixed(z) = sub.altitude {
        anchor.z = z;
    }
    prog.soc.push(b.distance_cone(
        Affine {
            c0: lin.rho / ls,
            ..Affine::default()
        },
        anchor,
    ));

    // Box.
    let upper = bounds.upper().to_array();
    let lower = bounds.lower().to_array();
    let dims = if sub.altitude == Altitude::Free { 3 } else { 2 };
    for d in 0..dims {
        let mut lo = Affine {
            c0: -lower[d] / ls,
            ..Affine::default()
        };
        lo.spatial[d] = 1.0;
        prog.lp.push(b.lp(lo));
        let mut hi = Affine {
            c0: upper[d] / ls,
            ..Affine::default()
        };
        hi.spatial[d] = -1.0;
        prog.lp.push(b.lp(hi));
    }

    let mut owners = Vec::new();
    match sub.blockage {
        Blockage::Ignored => {}
        Blockage::Relaxed { regions, lambda, big_m } => {
            for (i, region) in regions.iter().enumerate() {
                if region.is_empty() {
                    continue;
                }
                let blk = prog.blocks.len();
                let nj = region.halfspaces.len();
                prog.blocks.push(nj);
                owners.push(i);
                for (j, hs) in region.halfspaces.iter().enumerate() {
                    // (a . x + C l - b - eps) / C >= 0
                    let a = hs.normal.to_array();
                    let e = Affine {
                        c0: -(hs.offset + eps) / big_m,
                        spatial: [a[0] * ls / big_m, a[1] * ls / big_m, a[2] * ls / big_m],
                        rate: 0.0,
                    };
                    let mut row = b.lp(e);
                    row.block = Some(blk);
                    row.local = vec![(j, -1.0)];
                    prog.lp.push(row);
                    for (coef, h) in [(-1.0, 0.0), (1.0, 1.0)] {
                        prog.lp.push(LpRow {
                            global: Vec::new(),
                            block: Some(blk),
                            local: vec![(j, coef)],
                            h,
                        });
                    }
                }
                prog.lp.push(LpRow {
                    global: Vec::new(),
                    block: Some(blk),
                    local: (0..nj).map(|j| (j, 1.0)).collect(),
                    h: nj as f64 - 1.0,
                });
                let l_t = &lin.l_anchor[i];
                c.extend(l_t.iter().map(|lt| lambda[i] * (1.0 - 2.0 * lt)));
            }
        }
        Blockage::Frozen { regions, l, big_m } => {
            for (region, li) in regions.iter().zip(l) {
                for (hs, &lij) in region.halfspaces.iter().zip(li) {
                    if lij >= 1.0 {
                        continue;
                    }
                    // (a . x - b - eps + C l) / ls >= 0
                    let a = hs.normal.to_array();
                    prog.lp.push(b.lp(Affine {
                        c0: (big_m * lij - hs.offset - eps) / ls,
                        spatial: a,
                        rate: 0.0,
                    }));
                }
            }
        }
    }
    prog.c = c;
    (prog, b, owners)
}

/// Solves the positioning step. The returned point is projected onto the
/// box and trust ball, and the binaries are clipped to `[0, 1]`, so tiny
/// solver infeasibilities never leak out.
pub fn solve_subproblem(sub: &Subproblem, settings: &Settings) -> ConvexSolution {
    let (prog, b, owners) = build(sub);
    let sol = cone::solve(&prog, settings);
    let lin = sub.lin;
    let ls = b.scale;
    let v = &sol.v;
    let mut x = match sub.altitude {
        Altitude::Free => Point3::new(v[0] * ls, v[1] * ls, v[2] * ls),
        Altitude::Fixed(z) => Point3::new(v[0] * ls, v[1] * ls, z),
    };
    let rate_mbps = v[b.rate_index()];
    let mut l = lin.l_anchor.clone();

    if sol.status != Status::Optimal && sol.status != Status::MaxIter {
        return ConvexSolution {
            x: lin.anchor,
            l,
            rate_mbps: f64::NAN,
            objective: f64::NAN,
            status: sol.status,
            iterations: sol.iterations,
        };
    }

    x = sub.bounds.clamp(x);
    let mut center = lin.anchor;
    if let Altitude::Fixed(z) = sub.altitude {
        center.z = z;
    }
    let step = x - center;
    if step.norm() > lin.rho {
        x = center + step * (lin.rho / step.norm());
    }

    let mut objective = rate_mbps;
    if let Blockage::Relaxed { lambda, .. } = sub.blockage {
        let mut off = prog.n_global;
        for (&i, &nb) in owners.iter().zip(&prog.blocks) {
            for j in 0..nb {
                let lij = v[off + j].clamp(0.0, 1.0);
                objective -= lambda[i] * penalty_bound(lij, lin.l_anchor[i][j]);
                l[i][j] = lij;
            }
            off += nb;
        }
    }
    ConvexSolution {
        x,
        l,
        rate_mbps,
        objective,
        status: sol.status,
        iterations: sol.iterations,
    }
}
