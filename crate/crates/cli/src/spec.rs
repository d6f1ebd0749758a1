//! Experiment specification files.

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use uav_relay::channel::dbm_to_watts;
use uav_relay::scenario::{generate, GeneratorConfig, Scenario};

use crate::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    /// The Lagrangian-relaxation optimiser.
    Lr,
    Es3d,
    Es2d,
    Center,
    Free,
}

impl Scheme {
    pub const ALL: [Scheme; 5] = [Scheme::Lr, Scheme::Es3d, Scheme::Es2d, Scheme::Center, Scheme::Free];

    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::Lr => "lr",
            Scheme::Es3d => "es3d",
            Scheme::Es2d => "es2d",
            Scheme::Center => "center",
            Scheme::Free => "free",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVariable {
    /// Number of UEs.
    K,
    /// BS power budget in dBm.
    PbDbm,
    /// UAV power budget in dBm.
    PvDbm,
    /// Built-up area ratio.
    Density,
}

impl SweepVariable {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepVariable::K => "k",
            SweepVariable::PbDbm => "pb_dbm",
            SweepVariable::PvDbm => "pv_dbm",
            SweepVariable::Density => "density",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub variable: SweepVariable,
    pub values: Vec<f64>,
}

/// Where trial scenarios come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioSource {
    /// Trial `t` draws a world with seed `seed_base + t`.
    Generator(GeneratorConfig),
    /// One trial per file; `trials` and `seed_base` are ignored.
    Files(Vec<PathBuf>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub scenario: ScenarioSource,
    pub schemes: Vec<Scheme>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<Sweep>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub seed_base: u64,
    /// Lattice spacing of the exhaustive searches.
    #[serde(default = "default_spacing")]
    pub es_spacing_m: f64,
    /// Altitude of es2d and free.
    #[serde(default = "default_altitude")]
    pub fixed_altitude_m: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
}

fn default_trials() -> usize {
    1
}
fn default_spacing() -> f64 {
    10.0
}
fn default_altitude() -> f64 {
    uav_relay::baselines::DEFAULT_FIXED_ALTITUDE_M
}

/// One sweep point: the variable (if any) and its value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub variable: Option<SweepVariable>,
    pub value: f64,
}

impl SweepPoint {
    pub fn variable_name(&self) -> &'static str {
        self.variable.map_or("none", SweepVariable::as_str)
    }
}

impl ExperimentSpec {
    /// Reads a spec; relative scenario file paths are taken relative to the
    /// spec's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(CliError::io(path))?;
        let mut spec: Self = serde_json::from_str(&text).map_err(|source| CliError::Json {
            path: path.to_path_buf(),
            source,
        })?;
        if let ScenarioSource::Files(files) = &mut spec.scenario {
            let base = path.parent().unwrap_or(Path::new("."));
            for f in files.iter_mut() {
                if f.is_relative() {
                    *f = base.join(&*f);
                }
            }
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn points(&self) -> Vec<SweepPoint> {
        match &self.sweep {
            Some(s) => s
                .values
                .iter()
                .map(|&value| SweepPoint {
                    variable: Some(s.variable),
                    value,
                })
                .collect(),
            None => vec![SweepPoint {
                variable: None,
                value: 0.0,
            }],
        }
    }

    pub fn trial_count(&self) -> usize {
        match &self.scenario {
            ScenarioSource::Generator(_) => self.trials,
            ScenarioSource::Files(f) => f.len(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(CliError::Spec(m));
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        if self.schemes.is_empty() {
            return bad("at least one scheme is required".into());
        }
        if self.schemes.iter().collect::<BTreeSet<_>>().len() != self.schemes.len() {
            return bad("schemes are listed more than once".into());
        }
        if !(self.es_spacing_m.is_finite() && self.es_spacing_m > 0.0) {
            return bad(format!("es_spacing_m must be positive, got {}", self.es_spacing_m));
        }
        if let Some(s) = &self.sweep {
            if s.values.is_empty() {
                return bad("sweep values must not be empty".into());
            }
            if s.values.iter().any(|v| !v.is_finite()) {
                return bad("sweep values must be finite".into());
            }
            let distinct: BTreeSet<u64> = s.values.iter().map(|v| v.to_bits()).collect();
            if distinct.len() != s.values.len() {
                return bad("sweep values must be distinct".into());
            }
        }
        match &self.scenario {
            ScenarioSource::Generator(config) => {
                for p in self.points() {
                    apply_to_config(config, p)?.validate()?;
                }
            }
            ScenarioSource::Files(files) => {
                if files.is_empty() {
                    return bad("scenario file list is empty".into());
                }
                if let Some(v @ (SweepVariable::K | SweepVariable::Density)) = self.sweep.as_ref().map(|s| s.variable) {
                    return bad(format!(
                        "sweep over {} needs a generator, not scenario files",
                        v.as_str()
                    ));
                }
            }
        }
        Ok(())
    }

    /// Scenario of trial `trial` at sweep point `point`.
    pub fn scenario(&self, point: SweepPoint, trial: usize) -> Result<Scenario> {
        match &self.scenario {
            ScenarioSource::Generator(config) => {
                let config = apply_to_config(config, point)?;
                Ok(generate(&config, self.seed_base + trial as u64)?)
            }
            ScenarioSource::Files(files) => {
                let mut s = Scenario::load(&files[trial])?;
                match point.variable {
                    Some(SweepVariable::PbDbm) => s.power.bs_total = dbm_to_watts(point.value),
                    Some(SweepVariable::PvDbm) => s.power.uav_total = dbm_to_watts(point.value),
                    _ => {}
                }
                Ok(s)
            }
        }
    }

    /// Seed recorded for a trial.
    pub fn seed(&self, trial: usize) -> u64 {
        self.seed_base + trial as u64
    }
}

fn apply_to_config(config: &GeneratorConfig, point: SweepPoint) -> Result<GeneratorConfig> {
    let mut c = config.clone();
    let v = point.value;
    match point.variable {
        None => {}
        Some(SweepVariable::K) => {
            if v < 1.0 || v.fract() != 0.0 {
                return Err(CliError::Spec(format!(
                    "number of UEs must be a positive integer, got {v}"
                )));
            }
            c.num_ues = v as usize;
        }
        Some(SweepVariable::PbDbm) => c.bs_total_dbm = v,
        Some(SweepVariable::PvDbm) => c.uav_total_dbm = v,
        Some(SweepVariable::Density) => c.density = v,
    }
    Ok(c)
}
