//! Max-min power allocation for a fixed UAV position.
//!
//! With LoS gains, every access link ends up with the same rate and the
//! backhaul carries exactly `K` times that rate. Which budget binds depends
//! on whether the backhaul at full BS power or the access links at full UAV
//! power form the bottleneck.

use serde::{Deserialize, Serialize};

use crate::channel::{ChannelParams, PowerParams};
use crate::scenario::Scenario;
use crate::{Error, Point3, Result};

/// Transmit powers in watts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerAllocation {
    #[serde(rename = "bs_w")]
    pub bs: f64,
    #[serde(rename = "ues_w")]
    pub ues: Vec<f64>,
}

impl PowerAllocation {
    pub fn uav_total(&self) -> f64 {
        self.ues.iter().sum()
    }
}

/// Which budget is exhausted by the optimal allocation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Bottleneck {
    /// Full BS power; the UAV backs off.
    Backhaul,
    /// Full UAV power; the BS backs off.
    Access,
}

/// Allocation together with the common per-UE rate it achieves (bit/s).
#[derive(Debug, Clone, PartialEq)]
pub struct Allocated {
    pub allocation: PowerAllocation,
    pub rate: f64,
    pub bottleneck: Bottleneck,
}

/// SNR per watt of a LoS link of length `d` over `bandwidth`.
fn snr_per_watt(ch: &ChannelParams, d: f64, bandwidth: f64) -> f64 {
    ch.beta_los / (ch.noise_psd * bandwidth * d.powf(ch.alpha_los))
}

/// Optimal powers at `x` for the given node layout.
pub fn allocate_at(
    x: Point3,
    bs: Point3,
    ues: &[Point3],
    ch: &ChannelParams,
    budget: &PowerParams,
) -> Result<Allocated> {
    if ues.is_empty() {
        return Err(Error::InvalidParameter("at least one UE is required".into()));
    }
    let dist = |p: Point3| {
        let d = x.distance(p);
        if d > 0.0 {
            Ok(d)
        } else {
            Err(Error::ZeroDistance(p))
        }
    };
    let k = ues.len() as f64;
    let (w_u, w_b) = (ch.bandwidth_ue, ch.bandwidth_bs);
    let eta_b = snr_per_watt(ch, dist(bs)?, w_b);
    let eta: Vec<f64> = ues
        .iter()
        .map(|&u| dist(u).map(|d| snr_per_watt(ch, d, w_u)))
        .collect::<Result<_>>()?;
    let eta_v = 1.0 / eta.iter().map(|e| 1.0 / e).sum::<f64>();

    // Rates in nats/s; comparing them avoids raising to W_B/K or W_U.
    let backhaul_share = (w_b / k) * (eta_b * budget.bs_total).ln_1p();
    let access_full = w_u * (eta_v * budget.uav_total).ln_1p();

    let (bs_w, snr_each, bottleneck) = if backhaul_share < access_full {
        let snr = (backhaul_share / w_u).exp_m1();
        (budget.bs_total, snr, Bottleneck::Backhaul)
    } else {
        let snr = eta_v * budget.uav_total;
        let bs_w = (k * access_full / w_b).exp_m1() / eta_b;
        (bs_w.min(budget.bs_total), snr, Bottleneck::Access)
    };
    let ues_w = eta.iter().map(|e| snr_each / e).collect();
    Ok(Allocated {
        allocation: PowerAllocation { bs: bs_w, ues: ues_w },
        rate: w_u * snr_each.ln_1p() / std::f64::consts::LN_2,
        bottleneck,
    })
}

/// Optimal powers for a UAV at `x` in `scenario`.
pub fn allocate(x: Point3, scenario: &Scenario) -> Result<PowerAllocation> {
    Ok(allocate_with_rate(x, scenario)?.allocation)
}

pub fn allocate_with_rate(x: Point3, scenario: &Scenario) -> Result<Allocated> {
    allocate_at(x, scenario.bs, &scenario.ues, &scenario.channel, &scenario.power)
}
