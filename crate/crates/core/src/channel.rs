//! Large-scale channel model and link capacities.
//!
//! The gain of a link of length `d` is `beta / d^alpha`, with one
//! `(alpha, beta)` pair for line-of-sight and one for obstructed links.

use std::f64::consts::LN_2;

use serde::{Deserialize, Serialize};

use crate::geometry::line_of_sight;
use crate::power::PowerAllocation;
use crate::scenario::Scenario;
use crate::{Error, Point3, Result};

/// Propagation and noise parameters, all in linear units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    pub alpha_los: f64,
    /// Gain at 1 m reference distance.
    pub beta_los: f64,
    pub alpha_nlos: f64,
    pub beta_nlos: f64,
    #[serde(rename = "noise_psd_w_per_hz")]
    pub noise_psd: f64,
    /// Bandwidth of every UAV-UE access link.
    #[serde(rename = "bandwidth_ue_hz")]
    pub bandwidth_ue: f64,
    /// Bandwidth of the BS-UAV backhaul.
    #[serde(rename = "bandwidth_bs_hz")]
    pub bandwidth_bs: f64,
    /// Carried for reporting only; the gains above are given directly.
    #[serde(rename = "carrier_hz")]
    pub carrier: f64,
}

/// Noise power spectral density of -174 dBm/Hz in W/Hz.
pub const THERMAL_NOISE_W_PER_HZ: f64 = 3.981_071_705_534_969e-21;

impl ChannelParams {
    /// Urban-macro defaults: 5 MHz per UE and a backhaul `k` times as wide.
    pub fn urban_default(k: usize) -> Self {
        let w_u = 5.0e6;
        Self {
            alpha_los: 2.0,
            beta_los: 10f64.powf(-4.643),
            alpha_nlos: 3.3,
            beta_nlos: 10f64.powf(-5.643),
            noise_psd: THERMAL_NOISE_W_PER_HZ,
            bandwidth_ue: w_u,
            bandwidth_bs: k as f64 * w_u,
            carrier: 5.0e9,
        }
    }

    /// `(alpha, beta)` of the selected propagation model.
    pub fn model(&self, los: bool) -> (f64, f64) {
        if los {
            (self.alpha_los, self.beta_los)
        } else {
            (self.alpha_nlos, self.beta_nlos)
        }
    }

    /// Linear gain `beta / d^alpha`.
    pub fn gain(&self, d: f64, los: bool) -> f64 {
        let (alpha, beta) = self.model(los);
        beta / d.powf(alpha)
    }

    pub fn validate(&self) -> Result<()> {
        let named = [
            ("alpha_los", self.alpha_los),
            ("beta_los", self.beta_los),
            ("alpha_nlos", self.alpha_nlos),
            ("beta_nlos", self.beta_nlos),
            ("noise_psd_w_per_hz", self.noise_psd),
            ("bandwidth_ue_hz", self.bandwidth_ue),
            ("bandwidth_bs_hz", self.bandwidth_bs),
        ];
        for (name, v) in named {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidScenario(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// Transmit power budgets in watts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerParams {
    #[serde(rename = "bs_total_w")]
    pub bs_total: f64,
    #[serde(rename = "uav_total_w")]
    pub uav_total: f64,
}

impl PowerParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("bs_total_w", self.bs_total), ("uav_total_w", self.uav_total)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidScenario(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub fn watts_to_dbm(w: f64) -> f64 {
    10.0 * w.log10() + 30.0
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Shannon capacity in bit/s of a link with SNR `snr` over `bandwidth` Hz.
pub fn shannon(bandwidth: f64, snr: f64) -> f64 {
    bandwidth * snr.ln_1p() / LN_2
}

/// Capacity in bit/s between the UAV at `x` and `endpoint`.
pub fn link_capacity(
    x: Point3,
    endpoint: Point3,
    power: f64,
    bandwidth: f64,
    los: bool,
    params: &ChannelParams,
) -> Result<f64> {
    let d = x.distance(endpoint);
    if d == 0.0 {
        return Err(Error::ZeroDistance(endpoint));
    }
    if power < 0.0 {
        return Err(Error::InvalidParameter(format!("negative transmit power {power}")));
    }
    let snr = power * params.gain(d, los) / (params.noise_psd * bandwidth);
    Ok(shannon(bandwidth, snr))
}

/// How link states are decided when evaluating capacities.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Environment {
    /// LoS iff the segment clears every building.
    Actual,
    /// Every link uses the LoS model.
    LosOnly,
}

/// Per-link capacities in bit/s: the backhaul and each access link.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkRates {
    pub backhaul: f64,
    pub access: Vec<f64>,
}

impl LinkRates {
    /// End-to-end max-min rate of the decode-and-forward relay: the backhaul
    /// is shared by all `K` streams.
    pub fn min_rate(&self) -> f64 {
        let k = self.access.len() as f64;
        self.access.iter().copied().fold(self.backhaul / k, f64::min)
    }
}

pub fn link_rates(x: Point3, alloc: &PowerAllocation, scenario: &Scenario, env: Environment) -> Result<LinkRates> {
    let ch = &scenario.channel;
    let los = |p: Point3| match env {
        Environment::LosOnly => true,
        Environment::Actual => line_of_sight(x, p, &scenario.buildings),
    };
    let backhaul = link_capacity(x, scenario.bs, alloc.bs, ch.bandwidth_bs, los(scenario.bs), ch)?;
    let access = scenario
        .ues
        .iter()
        .zip(&alloc.ues)
        .map(|(&ue, &p)| link_capacity(x, ue, p, ch.bandwidth_ue, los(ue), ch))
        .collect::<Result<Vec<_>>>()?;
    Ok(LinkRates { backhaul, access })
}

/// `min(min_k R_k, R_B / K)` in bit/s with link states taken from the actual
/// building layout.
pub fn min_capacity_actual(x: Point3, alloc: &PowerAllocation, scenario: &Scenario) -> Result<f64> {
    Ok(link_rates(x, alloc, scenario, Environment::Actual)?.min_rate())
}
