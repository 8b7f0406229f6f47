//! Spoofing strategies of the co-moving attacker.
//!
//! The attacker only ever sees its own sensors (IMU and GPS receiver riding on
//! the same vehicle) and its own transmitted history. None of the functions
//! here take target-filter state as an argument.

use nalgebra::{Matrix6, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ekf::{self, EkfError, EkfParams, Gating, MeasurementMode, NavState};
use crate::sensors::{FixOrigin, GpsFix, ImuSample};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AttackError {
    #[error("attacker has no GPS fix to start from")]
    NotReady,
    #[error("replica filter failed: {0}")]
    Replica(#[from] EkfError),
    #[error("invalid attack configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Fixed,
    ImuOnly,
    Feedback,
    VelocityInjection,
}

impl Strategy {
    pub fn name(self) -> &'static str {
        match self {
            Self::Fixed => "fixed",
            Self::ImuOnly => "imu_only",
            Self::Feedback => "feedback",
            Self::VelocityInjection => "velocity_injection",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DeltaPShape {
    #[default]
    Zero,
    ConstantOffset,
    LinearRamp,
}

fn default_axis() -> [f64; 3] {
    [1.0, 0.0, 0.0]
}

/// Position offset added on top of the replica estimate at each epoch.
///
/// `constant_offset` adds `magnitude * axis`; `linear_ramp` adds
/// `min(ramp_rate * elapsed, magnitude) * axis`, where `elapsed` counts from
/// attack onset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeltaPSchedule {
    #[serde(default)]
    pub shape: DeltaPShape,
    #[serde(default)]
    pub magnitude: f64,
    #[serde(default)]
    pub ramp_rate: f64,
    #[serde(default = "default_axis")]
    pub axis: [f64; 3],
}

impl Default for DeltaPSchedule {
    fn default() -> Self {
        Self::zero()
    }
}

impl DeltaPSchedule {
    pub fn zero() -> Self {
        Self {
            shape: DeltaPShape::Zero,
            magnitude: 0.0,
            ramp_rate: 0.0,
            axis: default_axis(),
        }
    }

    pub fn constant(offset: f64, axis: [f64; 3]) -> Self {
        Self {
            shape: DeltaPShape::ConstantOffset,
            magnitude: offset,
            ramp_rate: 0.0,
            axis,
        }
    }

    pub fn ramp(rate: f64, cap: f64, axis: [f64; 3]) -> Self {
        Self {
            shape: DeltaPShape::LinearRamp,
            magnitude: cap,
            ramp_rate: rate,
            axis,
        }
    }

    pub fn validate(&self) -> Result<(), AttackError> {
        let n = Vector3::from(self.axis).norm();
        if (n - 1.0).abs() > 1e-9 {
            return Err(AttackError::Config(format!(
                "delta_p axis must be unit length, got {n}"
            )));
        }
        if !(self.magnitude >= 0.0 && self.magnitude.is_finite()) {
            return Err(AttackError::Config("delta_p magnitude must be >= 0".into()));
        }
        if !(self.ramp_rate >= 0.0 && self.ramp_rate.is_finite()) {
            return Err(AttackError::Config("delta_p ramp_rate must be >= 0".into()));
        }
        Ok(())
    }

    pub fn offset(&self, elapsed: f64) -> Vector3<f64> {
        let m = match self.shape {
            DeltaPShape::Zero => return Vector3::zeros(),
            DeltaPShape::ConstantOffset => self.magnitude,
            DeltaPShape::LinearRamp => (self.ramp_rate * elapsed.max(0.0)).min(self.magnitude),
        };
        Vector3::from(self.axis) * m
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum VelocitySource {
    /// Attacker IMU integrated once from the onset velocity.
    #[default]
    Imu,
    /// Attacker GPS velocity plus extra Gaussian noise (`sigma`, m/s per axis).
    GpsProxy { sigma: f64, seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PositionChannel {
    #[default]
    Feedback,
    DeadReckoning,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct VelocityInjection {
    #[serde(default)]
    pub source: VelocitySource,
    #[serde(default)]
    pub position_channel: PositionChannel,
}

/// Everything the attacker knows before onset: its strategy plus the
/// target's public filter defaults.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackerSetup {
    pub strategy: Strategy,
    pub delta_p: DeltaPSchedule,
    pub velocity: VelocityInjection,
    pub params: EkfParams,
    pub p0: Matrix6<f64>,
    pub fusion: MeasurementMode,
    pub gating: Gating,
}

/// Pure inertial integration, same kinematics as the filter prediction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeadReckoner {
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
}

impl DeadReckoner {
    pub fn step(&mut self, accel: &Vector3<f64>, dt: f64) {
        self.position += self.velocity * dt + accel * (0.5 * dt * dt);
        self.velocity += accel * dt;
    }
}

#[derive(Debug, Clone)]
pub struct AttackerState {
    setup: AttackerSetup,
    z0: GpsFix,
    z_prev: GpsFix,
    onset: f64,
    replica: Option<NavState>,
    /// Transmitted fix not yet folded into the replica.
    pending: Option<GpsFix>,
    dr: DeadReckoner,
    proxy_rng: Option<ChaCha8Rng>,
    replica_applied: bool,
}

/// Starts an attack from the attacker's own current GPS reading.
pub fn attack_start(
    setup: AttackerSetup,
    gps: Option<&GpsFix>,
) -> Result<AttackerState, AttackError> {
    let gps = gps.ok_or(AttackError::NotReady)?;
    setup.delta_p.validate()?;
    let mut z0 = *gps;
    z0.origin = FixOrigin::Spoofed;
    if setup.strategy == Strategy::Fixed {
        z0.velocity = Vector3::zeros();
    }
    let replica = match setup.strategy {
        Strategy::Feedback => Some(NavState::from_fix(&z0, setup.p0)),
        Strategy::VelocityInjection
            if setup.velocity.position_channel == PositionChannel::Feedback =>
        {
            Some(NavState::from_fix(&z0, setup.p0))
        }
        _ => None,
    };
    let proxy_rng = match setup.velocity.source {
        VelocitySource::GpsProxy { sigma, seed }
            if setup.strategy == Strategy::VelocityInjection =>
        {
            if !(sigma >= 0.0) {
                return Err(AttackError::Config("proxy sigma must be >= 0".into()));
            }
            Some(ChaCha8Rng::seed_from_u64(seed))
        }
        _ => None,
    };
    Ok(AttackerState {
        dr: DeadReckoner {
            position: z0.position,
            velocity: z0.velocity,
        },
        onset: z0.t,
        z_prev: z0,
        z0,
        replica,
        pending: None,
        proxy_rng,
        replica_applied: true,
        setup,
    })
}

impl AttackerState {
    pub fn strategy(&self) -> Strategy {
        self.setup.strategy
    }

    pub fn z0(&self) -> &GpsFix {
        &self.z0
    }

    pub fn z_prev(&self) -> &GpsFix {
        &self.z_prev
    }

    pub fn replica(&self) -> Option<&NavState> {
        self.replica.as_ref()
    }

    pub fn dead_reckoning(&self) -> &DeadReckoner {
        &self.dr
    }

    /// Whether the replica fused the last transmitted fix (mirrors target gating).
    pub fn replica_applied(&self) -> bool {
        self.replica_applied
    }

    fn replica_mode(&self) -> MeasurementMode {
        match self.setup.strategy {
            Strategy::VelocityInjection => MeasurementMode::Position,
            _ => self.setup.fusion,
        }
    }

    /// Folds the last transmitted fix into the replica at the epoch it was sent.
    fn fuse_pending(&mut self) -> Result<(), AttackError> {
        let mode = self.replica_mode();
        let (Some(z), Some(replica)) = (self.pending.take(), self.replica.as_mut()) else {
            return Ok(());
        };
        let s = &self.setup;
        let innov = ekf::innovation(replica, &z, &s.params, mode)?;
        let (next, applied) = ekf::update(replica, &innov, &s.params, s.gating)?;
        *replica = next;
        self.replica_applied = applied;
        Ok(())
    }

    /// Consumes one attacker IMU sample covering `dt` seconds.
    pub fn propagate(&mut self, imu: &ImuSample, dt: f64) -> Result<(), AttackError> {
        self.fuse_pending()?;
        if let Some(replica) = self.replica.as_mut() {
            *replica = ekf::predict(replica, imu, dt, &self.setup.params)?;
        }
        self.dr.step(&imu.accel, dt);
        Ok(())
    }

    fn stamp(&self, position: Vector3<f64>, velocity: Vector3<f64>, t: f64) -> GpsFix {
        GpsFix {
            position,
            velocity,
            t,
            origin: FixOrigin::Spoofed,
        }
    }

    /// The onset value, re-stamped. Velocity is zero.
    pub fn next_spoof_fixed(&self, t: f64) -> GpsFix {
        self.stamp(self.z0.position, self.z0.velocity, t)
    }

    /// The attacker's own inertial solution since onset.
    pub fn next_spoof_imu_only(&self, t: f64) -> GpsFix {
        self.stamp(self.dr.position, self.dr.velocity, t)
    }

    /// Replica estimate plus the scheduled offset.
    pub fn next_spoof_feedback(&mut self, t: f64) -> Result<GpsFix, AttackError> {
        self.fuse_pending()?;
        let replica = self
            .replica
            .as_ref()
            .ok_or_else(|| AttackError::Config("feedback strategy without replica".into()))?;
        let dp = self.setup.delta_p.offset(t - self.onset);
        Ok(self.stamp(replica.position() + dp, replica.velocity(), t))
    }

    /// Velocity straight from the attacker's sensors; position from the
    /// configured channel.
    pub fn next_spoof_velocity(&mut self, t: f64, own_gps: &GpsFix) -> Result<GpsFix, AttackError> {
        self.fuse_pending()?;
        let position = match (self.setup.velocity.position_channel, self.replica.as_ref()) {
            (PositionChannel::Feedback, Some(r)) => {
                r.position() + self.setup.delta_p.offset(t - self.onset)
            }
            _ => self.dr.position,
        };
        let velocity = match (self.setup.velocity.source, self.proxy_rng.as_mut()) {
            (VelocitySource::GpsProxy { sigma, .. }, Some(rng)) => {
                let mut v = own_gps.velocity;
                for i in 0..3 {
                    let n: f64 = rng.sample(StandardNormal);
                    v[i] += sigma * n;
                }
                v
            }
            _ => self.dr.velocity,
        };
        Ok(self.stamp(position, velocity, t))
    }

    /// Produces the fix to transmit at epoch time `t`.
    pub fn next_spoof(&mut self, t: f64, own_gps: &GpsFix) -> Result<GpsFix, AttackError> {
        match self.setup.strategy {
            Strategy::Fixed => Ok(self.next_spoof_fixed(t)),
            Strategy::ImuOnly => Ok(self.next_spoof_imu_only(t)),
            Strategy::Feedback => self.next_spoof_feedback(t),
            Strategy::VelocityInjection => self.next_spoof_velocity(t, own_gps),
        }
    }

    /// Records what actually went on air. The replica fuses it before the
    /// next prediction, mirroring the target's update at this epoch.
    pub fn acknowledge(&mut self, sent: &GpsFix) {
        self.z_prev = *sent;
        if self.replica.is_some() {
            self.pending = Some(*sent);
        }
    }
}
