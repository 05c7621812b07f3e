//! Scenario files: TOML with a versioned header.
//!
//! Only `schema_version` and `[integrator]` are required; every other table
//! falls back to defaults. A relative `maps` path is resolved against the
//! scenario file's directory; without it the built-in synthetic maps are used.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::airframe::AirframeParams;
use crate::environment::AtmosphereParams;
use crate::error::{Error, Result};
use crate::estimation::{BankGains, ThrustEstimateMode};
use crate::guidance::{Compensation, ControllerGains, FilterSettings};
use crate::harness::disturbance::DisturbanceConfig;
use crate::harness::trajectory::Segment;
use crate::simkit::IntegratorSettings;
use crate::turbojet::maps::{CharacteristicMaps, SyntheticSpec};
use crate::turbojet::EngineParams;

pub const SCHEMA_VERSION: u32 = 1;

/// Trimmed wings-level start.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitialCondition {
    /// Airspeed, m/s; also the desired ground speed.
    pub v: f64,
    /// Altitude above the reference, m.
    pub altitude: f64,
    /// Heading, rad.
    pub heading: f64,
    pub north: f64,
    pub east: f64,
}

impl Default for InitialCondition {
    fn default() -> Self {
        Self {
            v: 35.0,
            altitude: 100.0,
            heading: 0.0,
            north: 0.0,
            east: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSettings {
    /// Spacing of logged rows, s; a whole multiple of the integration step.
    pub log_interval: f64,
}

impl Default for OutputSettings {
    fn default() -> Self {
        Self { log_interval: 0.01 }
    }
}

impl OutputSettings {
    /// Integration steps per logged row.
    pub fn stride(&self, dt: f64) -> usize {
        (self.log_interval / dt).round().max(1.0) as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub maps: Option<PathBuf>,
    pub integrator: IntegratorSettings,
    #[serde(default)]
    pub initial: InitialCondition,
    #[serde(default)]
    pub airframe: AirframeParams,
    #[serde(default)]
    pub engine: EngineParams,
    #[serde(default)]
    pub atmosphere: AtmosphereParams,
    #[serde(default)]
    pub gains: ControllerGains,
    #[serde(default)]
    pub filters: FilterSettings,
    #[serde(default)]
    pub observers: BankGains,
    #[serde(default)]
    pub thrust_estimate: ThrustEstimateMode,
    #[serde(default)]
    pub compensation: Compensation,
    /// Constant bank command replacing the coordinated-turn law.
    #[serde(default)]
    pub mu_d_override: Option<f64>,
    #[serde(default)]
    pub trajectory: Vec<Segment>,
    #[serde(default)]
    pub disturbances: DisturbanceConfig,
    #[serde(default)]
    pub output: OutputSettings,
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::config(
                "schema_version",
                format!("unsupported version {}, expected {SCHEMA_VERSION}", self.schema_version),
            ));
        }
        self.integrator.validate()?;
        self.airframe.validate()?;
        self.engine.validate()?;
        self.atmosphere.validate()?;
        self.gains.validate()?;
        self.filters.validate(&self.gains)?;
        self.observers.validate()?;
        let ic = &self.initial;
        if !(ic.v > self.airframe.v_min && ic.v.is_finite()) {
            return Err(Error::config("initial.v", "must exceed airframe.v_min"));
        }
        if !(0.0..30_000.0).contains(&ic.altitude) {
            return Err(Error::config("initial.altitude", "must lie in [0, 30000) m"));
        }
        for (f, v) in [("initial.heading", ic.heading), ("initial.north", ic.north), ("initial.east", ic.east)] {
            if !v.is_finite() {
                return Err(Error::config(f, "must be finite"));
            }
        }
        if let Some(mu) = self.mu_d_override {
            if !(mu.abs() < std::f64::consts::FRAC_PI_2) {
                return Err(Error::config("mu_d_override", "must lie in (-pi/2, pi/2)"));
            }
        }
        for (i, s) in self.trajectory.iter().enumerate() {
            s.validate(i)?;
        }
        let dt = self.integrator.dt;
        let li = self.output.log_interval;
        if !(li >= dt) || ((li / dt).round() * dt - li).abs() > 1e-9 * li {
            return Err(Error::config("output.log_interval", "must be a whole multiple of integrator.dt"));
        }
        self.disturbances.validate()
    }

    /// SHA-256 of the canonical JSON form, hex encoded.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serialises");
        hex(&Sha256::digest(&json))
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].bytes().filter(|&b| b == b'\n').count() + 1
}

/// Parses and validates scenario text without touching the filesystem.
pub fn parse_scenario(text: &str, source_name: &str) -> Result<ScenarioConfig> {
    let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| Error::Parse {
        source_name: source_name.to_string(),
        line: e.span().map_or(0, |s| line_of(text, s.start)),
        message: e.message().to_string(),
    })?;
    cfg.validate()?;
    Ok(cfg)
}

/// Where a scenario's maps came from.
#[derive(Debug, Clone, PartialEq)]
pub enum MapSource {
    Synthetic,
    File { path: PathBuf, sha256: String },
}

/// A validated configuration with its maps loaded.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub maps: CharacteristicMaps,
    pub map_source: MapSource,
}

impl Scenario {
    /// Loads maps relative to `base_dir` and checks them against the engine ranges.
    pub fn resolve(config: ScenarioConfig, base_dir: &Path) -> Result<Self> {
        config.validate()?;
        let (maps, map_source) = match &config.maps {
            None => {
                let e = &config.engine;
                let spec = SyntheticSpec {
                    pi_c_min: e.pi_c_min,
                    pi_c_max: e.pi_c_max,
                    w_min: e.w_g4cor_min,
                    w_max: e.w_g4cor_max,
                    c_p: e.c_p,
                    kappa: e.kappa,
                    ..SyntheticSpec::default()
                };
                (CharacteristicMaps::synthetic(&spec), MapSource::Synthetic)
            }
            Some(rel) => {
                let path = base_dir.join(rel);
                let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
                let maps = crate::turbojet::maps::parse_maps(&text, &path.display().to_string())?;
                let sha256 = hex(&Sha256::digest(text.as_bytes()));
                (maps, MapSource::File { path, sha256 })
            }
        };
        let e = &config.engine;
        maps.validate_against((e.pi_c_min, e.pi_c_max), (e.w_g4cor_min, e.w_g4cor_max))?;
        Ok(Self {
            config,
            maps,
            map_source,
        })
    }
}

pub fn load_scenario(path: &Path) -> Result<Scenario> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let cfg = parse_scenario(&text, &path.display().to_string())?;
    Scenario::resolve(cfg, path.parent().unwrap_or(Path::new(".")))
}
