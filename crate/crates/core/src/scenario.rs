//! Problem instances: Manhattan-grid generation and JSON I/O.
//!
//! Generation draws from `ChaCha8Rng::seed_from_u64(seed)` in a fixed order
//! (building footprints and heights row by row, then UE positions), so a
//! seed identifies a scenario across platforms and releases.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{db_to_linear, dbm_to_watts, ChannelParams, PowerParams};
use crate::geometry::{all_blocked_regions, first_unblocked, AreaBounds, BlockedRegion, Building};
use crate::lagrangian::{FALLBACK_SPACING_M, FALLBACK_STEP_M};
use crate::{Error, Point3, Result};

/// A complete problem instance. Serialised with linear units only.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Scenario {
    pub seed: u64,
    pub bounds: AreaBounds,
    pub bs: Point3,
    pub ues: Vec<Point3>,
    pub buildings: Vec<Building>,
    pub channel: ChannelParams,
    pub power: PowerParams,
}

impl Scenario {
    pub fn k(&self) -> usize {
        self.ues.len()
    }

    /// Blocked regions of the BS and every UE against every building.
    pub fn blocked_regions(&self) -> Result<Vec<BlockedRegion>> {
        all_blocked_regions(self.bs, &self.ues, &self.buildings)
    }

    pub fn validate(&self) -> Result<()> {
        self.bounds.validate()?;
        self.channel.validate()?;
        self.power.validate()?;
        if self.ues.is_empty() {
            return Err(Error::InvalidScenario("at least one UE is required".into()));
        }
        for (i, b) in self.buildings.iter().enumerate() {
            b.validate(i)?;
            let (x0, x1) = b.x_range();
            let (y0, y1) = b.y_range();
            if x0 < 0.0 || y0 < 0.0 || x1 > self.bounds.x_d || y1 > self.bounds.y_d {
                return Err(Error::InvalidBuilding {
                    index: i,
                    reason: "footprint leaves the area".into(),
                });
            }
            if b.height > self.bounds.h_min {
                return Err(Error::InvalidBuilding {
                    index: i,
                    reason: format!(
                        "height {} exceeds minimum flight altitude {}",
                        b.height, self.bounds.h_min
                    ),
                });
            }
        }
        let outside_all = |p: Point3| self.buildings.iter().position(|b| b.footprint_contains(p.x, p.y));
        if !self.bs.is_finite() || self.bs.z < 0.0 {
            return Err(Error::InvalidScenario(format!("bad BS position {:?}", self.bs)));
        }
        if let Some(m) = outside_all(self.bs) {
            return Err(Error::InvalidScenario(format!("BS lies inside building {m}")));
        }
        for (k, &ue) in self.ues.iter().enumerate() {
            let in_area = ue.x >= 0.0 && ue.x <= self.bounds.x_d && ue.y >= 0.0 && ue.y <= self.bounds.y_d;
            if !ue.is_finite() || !in_area || ue.z < 0.0 || ue.z >= self.bounds.h_min {
                return Err(Error::InvalidScenario(format!(
                    "UE {k} at {ue:?} is outside the ground area"
                )));
            }
            if let Some(m) = outside_all(ue) {
                return Err(Error::InvalidScenario(format!("UE {k} lies inside building {m}")));
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: RawScenario = serde_json::from_str(text)?;
        let s = raw.into_scenario()?;
        s.validate()?;
        Ok(s)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serialises")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_json() + "\n")?;
        Ok(())
    }
}

// On-disk form. Gains, noise and power budgets may be given either in linear
// units or in dB/dBm, but not both.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    #[serde(default)]
    seed: u64,
    bounds: AreaBounds,
    bs: Point3,
    ues: Vec<Point3>,
    #[serde(default)]
    buildings: Vec<Building>,
    channel: RawChannel,
    power: RawPower,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawChannel {
    alpha_los: f64,
    beta_los: Option<f64>,
    beta_los_db: Option<f64>,
    alpha_nlos: f64,
    beta_nlos: Option<f64>,
    beta_nlos_db: Option<f64>,
    noise_psd_w_per_hz: Option<f64>,
    noise_psd_dbm_per_hz: Option<f64>,
    bandwidth_ue_hz: f64,
    /// Defaults to `K` times the per-UE bandwidth.
    bandwidth_bs_hz: Option<f64>,
    #[serde(default = "default_carrier")]
    carrier_hz: f64,
}

fn default_carrier() -> f64 {
    5.0e9
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPower {
    bs_total_w: Option<f64>,
    bs_total_dbm: Option<f64>,
    uav_total_w: Option<f64>,
    uav_total_dbm: Option<f64>,
}

fn one_of(name: &str, linear: Option<f64>, log: Option<f64>, conv: fn(f64) -> f64) -> Result<f64> {
    match (linear, log) {
        (Some(v), None) => Ok(v),
        (None, Some(v)) => Ok(conv(v)),
        (Some(_), Some(_)) => Err(Error::InvalidScenario(format!(
            "{name} given in both linear and logarithmic units"
        ))),
        (None, None) => Err(Error::InvalidScenario(format!("{name} is missing"))),
    }
}

impl RawScenario {
    fn into_scenario(self) -> Result<Scenario> {
        let c = self.channel;
        let k = self.ues.len() as f64;
        let channel = ChannelParams {
            alpha_los: c.alpha_los,
            beta_los: one_of("beta_los", c.beta_los, c.beta_los_db, db_to_linear)?,
            alpha_nlos: c.alpha_nlos,
            beta_nlos: one_of("beta_nlos", c.beta_nlos, c.beta_nlos_db, db_to_linear)?,
            noise_psd: one_of("noise_psd", c.noise_psd_w_per_hz, c.noise_psd_dbm_per_hz, dbm_to_watts)?,
            bandwidth_ue: c.bandwidth_ue_hz,
            bandwidth_bs: c.bandwidth_bs_hz.unwrap_or(k * c.bandwidth_ue_hz),
            carrier: c.carrier_hz,
        };
        let p = self.power;
        let power = PowerParams {
            bs_total: one_of("bs_total", p.bs_total_w, p.bs_total_dbm, dbm_to_watts)?,
            uav_total: one_of("uav_total", p.uav_total_w, p.uav_total_dbm, dbm_to_watts)?,
        };
        Ok(Scenario {
            seed: self.seed,
            bounds: self.bounds,
            bs: self.bs,
            ues: self.ues,
            buildings: self.buildings,
            channel,
            power,
        })
    }
}

/// Parameters of the random Manhattan-grid world.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorConfig {
    /// Side of the square area.
    pub area_m: f64,
    /// Building cells per side; the pitch is `area_m / grid_cells`.
    /// Mutually exclusive with `grid_pitch_m`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_cells: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_pitch_m: Option<f64>,
    /// Target ratio of built-up area to total area.
    pub density: f64,
    pub mean_height_m: f64,
    pub height_clip_m: [f64; 2],
    pub num_ues: usize,
    #[serde(default = "default_bs")]
    pub bs: Point3,
    #[serde(default = "default_h_min")]
    pub h_min_m: f64,
    #[serde(default = "default_h_max")]
    pub h_max_m: f64,
    #[serde(default = "default_power_dbm")]
    pub bs_total_dbm: f64,
    #[serde(default = "default_power_dbm")]
    pub uav_total_dbm: f64,
    /// Redraw the UEs until some admissible UAV position sees the BS and
    /// every UE.
    #[serde(default = "default_true")]
    pub require_unblocked_point: bool,
}

fn default_bs() -> Point3 {
    Point3::new(0.0, 0.0, 25.0)
}
fn default_h_min() -> f64 {
    50.0
}
fn default_h_max() -> f64 {
    crate::geometry::DEFAULT_H_MAX
}
fn default_power_dbm() -> f64 {
    30.0
}
fn default_true() -> bool {
    true
}

/// UE redraws before a world is declared hopeless.
const MAX_UE_DRAWS: usize = 10_000;

impl GeneratorConfig {
    /// 500 m x 500 m with a 5 x 5 building grid.
    pub fn full_scale(k: usize) -> Self {
        Self {
            area_m: 500.0,
            grid_cells: Some(5),
            grid_pitch_m: None,
            density: 0.2,
            mean_height_m: 23.0,
            height_clip_m: [3.0, 50.0],
            num_ues: k,
            bs: default_bs(),
            h_min_m: default_h_min(),
            h_max_m: default_h_max(),
            bs_total_dbm: 30.0,
            uav_total_dbm: 30.0,
            require_unblocked_point: true,
        }
    }

    /// 250 m x 250 m with a 3 x 3 building grid.
    pub fn desk_scale(k: usize) -> Self {
        Self {
            area_m: 250.0,
            grid_cells: Some(3),
            ..Self::full_scale(k)
        }
    }

    pub fn pitch(&self) -> Result<f64> {
        match (self.grid_cells, self.grid_pitch_m) {
            (Some(n), None) if n > 0 => Ok(self.area_m / n as f64),
            (None, Some(p)) if p > 0.0 && p.is_finite() => Ok(p),
            (Some(_), Some(_)) => Err(Error::Config("give either grid_cells or grid_pitch_m, not both".into())),
            _ => Err(Error::Config("grid_cells or grid_pitch_m must be positive".into())),
        }
    }

    fn cells_per_side(&self, pitch: f64) -> usize {
        (self.area_m / pitch + 1e-9).floor() as usize
    }

    /// Rayleigh scale whose (untruncated) mean equals `mean_height_m`.
    pub fn rayleigh_sigma(&self) -> f64 {
        self.mean_height_m / std::f64::consts::FRAC_PI_2.sqrt()
    }

    /// Nominal footprint side `s*`; sides are drawn from `[0.7 s*, 1.3 s*]`.
    pub fn nominal_side(&self) -> Result<f64> {
        Ok(self.density.sqrt() * self.pitch()?)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.area_m.is_finite() && self.area_m > 0.0) {
            return Err(Error::Config(format!("area_m must be positive, got {}", self.area_m)));
        }
        let pitch = self.pitch()?;
        if self.cells_per_side(pitch) == 0 {
            return Err(Error::Config("grid pitch exceeds the area".into()));
        }
        if !(self.density > 0.0 && self.density < 1.0) {
            return Err(Error::Config(format!(
                "density must lie in (0, 1), got {}",
                self.density
            )));
        }
        if 1.3 * self.nominal_side()? >= pitch {
            return Err(Error::Config(format!(
                "density {} is unreachable without overlapping footprints at pitch {pitch} m",
                self.density
            )));
        }
        let [lo, hi] = self.height_clip_m;
        if !(lo > 0.0 && lo < hi && self.mean_height_m > 0.0) {
            return Err(Error::Config(format!(
                "height clip [{lo}, {hi}] must be ordered and positive"
            )));
        }
        if hi > self.h_min_m {
            return Err(Error::Config(format!(
                "buildings up to {hi} m would reach above h_min {}",
                self.h_min_m
            )));
        }
        if self.h_max_m < self.h_min_m {
            return Err(Error::Config("h_max_m below h_min_m".into()));
        }
        if self.num_ues == 0 {
            return Err(Error::Config("num_ues must be at least 1".into()));
        }
        Ok(())
    }
}

/// One Rayleigh draw with scale `sigma` by inverse CDF.
pub fn sample_rayleigh<R: Rng + ?Sized>(rng: &mut R, sigma: f64) -> f64 {
    let u: f64 = rng.gen();
    sigma * (-2.0 * (-u).ln_1p()).sqrt()
}

/// Rayleigh draw conditioned on `[lo, hi]` by rejection.
pub fn sample_height<R: Rng + ?Sized>(rng: &mut R, sigma: f64, lo: f64, hi: f64) -> f64 {
    loop {
        let h = sample_rayleigh(rng, sigma);
        if (lo..=hi).contains(&h) {
            return h;
        }
    }
}

/// Draws a scenario. Identical `(config, seed)` pairs give identical output.
pub fn generate(config: &GeneratorConfig, seed: u64) -> Result<Scenario> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pitch = config.pitch()?;
    let n = config.cells_per_side(pitch);
    let s = config.nominal_side()?;
    let sigma = config.rayleigh_sigma();
    let [h_lo, h_hi] = config.height_clip_m;

    let mut buildings = Vec::with_capacity(n * n);
    for gx in 0..n {
        for gy in 0..n {
            let length = rng.gen_range(0.7 * s..=1.3 * s);
            let width = rng.gen_range(0.7 * s..=1.3 * s);
            let height = sample_height(&mut rng, sigma, h_lo, h_hi);
            buildings.push(Building::new(
                pitch * (gx as f64 + 0.5),
                pitch * (gy as f64 + 0.5),
                length,
                width,
                height,
            ));
        }
    }

    let budget = PowerParams {
        bs_total: dbm_to_watts(config.bs_total_dbm),
        uav_total: dbm_to_watts(config.uav_total_dbm),
    };
    let bounds = AreaBounds::new(config.area_m, config.area_m, config.h_min_m, config.h_max_m);
    let mut draws = 0;
    let scenario = loop {
        draws += 1;
        let mut ues = Vec::with_capacity(config.num_ues);
        while ues.len() < config.num_ues {
            let x = rng.gen_range(0.0..=config.area_m);
            let y = rng.gen_range(0.0..=config.area_m);
            if !buildings.iter().any(|b| b.footprint_contains(x, y)) {
                ues.push(Point3::new(x, y, 0.0));
            }
        }
        let scenario = Scenario {
            seed,
            bounds,
            bs: config.bs,
            ues,
            buildings: buildings.clone(),
            channel: ChannelParams::urban_default(config.num_ues),
            power: budget,
        };
        if !config.require_unblocked_point {
            break scenario;
        }
        let regions = scenario.blocked_regions()?;
        if first_unblocked(&bounds, &regions, FALLBACK_STEP_M, FALLBACK_SPACING_M).is_some() {
            break scenario;
        }
        if draws >= MAX_UE_DRAWS {
            return Err(Error::InvalidScenario(format!(
                "no UE drop out of {MAX_UE_DRAWS} leaves an unblocked UAV position"
            )));
        }
    };
    scenario.validate()?;
    Ok(scenario)
}
