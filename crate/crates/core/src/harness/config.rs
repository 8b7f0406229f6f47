use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::attack::{DeltaPSchedule, Strategy, VelocityInjection, VelocitySource};
use crate::ekf::{EkfConfig, Gating, MeasurementMode};
use crate::sensors::{GpsModel, ImuConfig};
use crate::simcore::{GeoRef, SimClock, TrajectoryProfile};
use crate::wirecodec::TxSchedule;

use super::HarnessError;

pub const SCHEMA_VERSION: u32 = 1;

fn default_dt_imu() -> f64 {
    0.005
}

fn default_dt_gps() -> f64 {
    0.2
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorConfig {
    pub target_imu: ImuConfig,
    pub attacker_imu: ImuConfig,
    /// The target's own receiver.
    pub gps: GpsModel,
    /// The attacker's receiver, used for the onset fix and the GPS velocity proxy.
    pub attacker_gps: GpsModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct DetectorConfig {
    /// Trailing number of attack epochs used for the correlation; whole window if unset.
    #[serde(default)]
    pub correlation_horizon: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackConfig {
    pub strategy: Strategy,
    #[serde(default)]
    pub start: f64,
    #[serde(default)]
    pub stop: Option<f64>,
    #[serde(default)]
    pub delta_p: DeltaPSchedule,
    #[serde(default)]
    pub velocity: VelocityInjection,
    /// Route every spoofed fix through the frame encoder and decoder.
    #[serde(default = "default_true")]
    pub wire: bool,
    #[serde(default)]
    pub tx: TxSchedule,
    /// Queue a heartbeat alongside each injected fix (the scheduler decides whether it goes out).
    #[serde(default)]
    pub heartbeat: bool,
    /// Replica gating; mirrors the target when unset.
    #[serde(default)]
    pub replica_gating: Option<Gating>,
}

impl AttackConfig {
    pub fn new(strategy: Strategy) -> Self {
        Self {
            strategy,
            start: 0.0,
            stop: None,
            delta_p: DeltaPSchedule::zero(),
            velocity: VelocityInjection::default(),
            wire: true,
            tx: TxSchedule::default(),
            heartbeat: false,
            replica_gating: None,
        }
    }

    pub fn active_at(&self, t: f64) -> bool {
        const EPS: f64 = 1e-9;
        t + EPS >= self.start && self.stop.is_none_or(|s| t <= s + EPS)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub name: String,
    pub duration: f64,
    #[serde(default = "default_dt_imu")]
    pub dt_imu: f64,
    #[serde(default = "default_dt_gps")]
    pub dt_gps: f64,
    #[serde(default)]
    pub geo: GeoRef,
    pub trajectory: TrajectoryProfile,
    pub sensors: SensorConfig,
    #[serde(default)]
    pub ekf: EkfConfig,
    #[serde(default)]
    pub fusion: MeasurementMode,
    #[serde(default)]
    pub gating: Gating,
    #[serde(default)]
    pub detector: DetectorConfig,
    #[serde(default)]
    pub attack: Option<AttackConfig>,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

impl ScenarioConfig {
    /// A quiet stationary scenario with no attack; handy as a starting point.
    pub fn baseline(duration: f64) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            name: "baseline".into(),
            duration,
            dt_imu: default_dt_imu(),
            dt_gps: default_dt_gps(),
            geo: GeoRef::default(),
            trajectory: TrajectoryProfile::Stationary,
            sensors: SensorConfig {
                target_imu: ImuConfig::with_seed(1),
                attacker_imu: ImuConfig::with_seed(2),
                gps: GpsModel::with_seed(3),
                attacker_gps: GpsModel::with_seed(4),
            },
            ekf: EkfConfig::default(),
            fusion: MeasurementMode::Both,
            gating: Gating::ReportOnly,
            detector: DetectorConfig::default(),
            attack: None,
            output: None,
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self, HarnessError> {
        let cfg: Self = toml::from_str(text).map_err(|e| HarnessError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|source| HarnessError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml_str(&text).map_err(|e| e.at(path))
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario config serializes")
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if self.schema_version != SCHEMA_VERSION {
            return bad(format!(
                "schema_version {} not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            ));
        }
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return bad(format!("duration must be positive, got {}", self.duration));
        }
        SimClock::new(self.dt_imu, self.dt_gps)?;
        self.geo.validate()?;
        self.trajectory.validate()?;
        self.sensors.target_imu.model()?;
        self.sensors.attacker_imu.model()?;
        self.sensors.gps.validate()?;
        self.sensors.attacker_gps.validate()?;
        self.ekf
            .params()
            .map_err(|e| HarnessError::Config(e.to_string()))?;
        if self.detector.correlation_horizon == Some(0)
            || self.detector.correlation_horizon == Some(1)
        {
            return bad("correlation_horizon must be at least 2".into());
        }
        if let Some(a) = &self.attack {
            if !(a.start >= 0.0 && a.start <= self.duration) {
                return bad(format!(
                    "attack start {} outside [0, {}]",
                    a.start, self.duration
                ));
            }
            if let Some(stop) = a.stop {
                if !(stop >= a.start && stop <= self.duration) {
                    return bad(format!(
                        "attack stop {stop} outside [{}, {}]",
                        a.start, self.duration
                    ));
                }
            }
            a.delta_p
                .validate()
                .map_err(|e| HarnessError::Config(e.to_string()))?;
            if let VelocitySource::GpsProxy { sigma, .. } = a.velocity.source {
                if !(sigma >= 0.0 && sigma.is_finite()) {
                    return bad(format!("proxy sigma must be >= 0, got {sigma}"));
                }
            }
            if a.tx.max_frames_per_epoch == 0 {
                return bad("max_frames_per_epoch must be >= 1".into());
            }
        }
        Ok(())
    }

    /// Offsets every seed by `k`, keeping seed-sharing relations intact.
    pub fn reseeded(&self, k: u64) -> Self {
        let mut out = self.clone();
        let s = &mut out.sensors;
        s.target_imu.seed = s.target_imu.seed.wrapping_add(k);
        s.attacker_imu.seed = s.attacker_imu.seed.wrapping_add(k);
        s.gps.seed = s.gps.seed.wrapping_add(k);
        s.attacker_gps.seed = s.attacker_gps.seed.wrapping_add(k);
        if let Some(a) = out.attack.as_mut() {
            if let VelocitySource::GpsProxy { seed, .. } = &mut a.velocity.source {
                *seed = seed.wrapping_add(k);
            }
        }
        out
    }

    pub fn strategy(&self) -> Option<Strategy> {
        self.attack.as_ref().map(|a| a.strategy)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Variant {
    pub name: String,
    #[serde(default)]
    pub attack: Option<AttackConfig>,
}

/// One base scenario and the attack variants compared against it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteConfig {
    pub schema_version: u32,
    pub base: ScenarioConfig,
    #[serde(rename = "variant")]
    pub variants: Vec<Variant>,
}

impl SuiteConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, HarnessError> {
        let cfg: Self = toml::from_str(text).map_err(|e| HarnessError::Parse(e.to_string()))?;
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(HarnessError::Config(format!(
                "schema_version {} not supported (expected {SCHEMA_VERSION})",
                cfg.schema_version
            )));
        }
        if cfg.variants.is_empty() {
            return Err(HarnessError::Config("suite has no variants".into()));
        }
        for c in cfg.expand() {
            c.validate()?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|source| HarnessError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml_str(&text).map_err(|e| e.at(path))
    }

    pub fn expand(&self) -> Vec<ScenarioConfig> {
        self.variants
            .iter()
            .map(|v| ScenarioConfig {
                name: v.name.clone(),
                attack: v.attack.clone(),
                ..self.base.clone()
            })
            .collect()
    }
}
