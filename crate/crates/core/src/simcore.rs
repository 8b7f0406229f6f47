//! Ground truth shared by the target and the co-moving attacker: time base,
//! trajectory profiles and the local NED <-> geodetic conversion.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Mean meridian (rectifying) radius of the WGS-84 ellipsoid, meters.
pub const MERIDIAN_RADIUS_M: f64 = 6_367_449.146;

const GRID_EPS: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid configuration: {0}")]
    Config(String),
}

/// Indexed simulation clock. Time is always `step_index * dt_imu`; it is
/// never accumulated by repeated float addition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimClock {
    dt_imu: f64,
    dt_gps: f64,
    imu_per_gps: u64,
    step_index: u64,
}

impl SimClock {
    pub fn new(dt_imu: f64, dt_gps: f64) -> Result<Self, SimError> {
        if !(dt_imu > 0.0 && dt_imu.is_finite()) || !(dt_gps > 0.0 && dt_gps.is_finite()) {
            return Err(SimError::Config(format!(
                "time steps must be positive (dt_imu={dt_imu}, dt_gps={dt_gps})"
            )));
        }
        let ratio = dt_gps / dt_imu;
        let rounded = ratio.round();
        if rounded < 1.0 || (ratio - rounded).abs() > GRID_EPS * ratio.max(1.0) {
            return Err(SimError::Config(format!(
                "dt_gps ({dt_gps}) must be an integer multiple of dt_imu ({dt_imu})"
            )));
        }
        Ok(Self {
            dt_imu,
            dt_gps,
            imu_per_gps: rounded as u64,
            step_index: 0,
        })
    }

    pub fn t(&self) -> f64 {
        self.time_at(self.step_index)
    }

    pub fn time_at(&self, step: u64) -> f64 {
        step as f64 * self.dt_imu
    }

    pub fn dt_imu(&self) -> f64 {
        self.dt_imu
    }

    pub fn dt_gps(&self) -> f64 {
        self.dt_gps
    }

    pub fn step_index(&self) -> u64 {
        self.step_index
    }

    pub fn imu_per_gps(&self) -> u64 {
        self.imu_per_gps
    }

    pub fn is_gps_epoch(&self) -> bool {
        self.step_index.is_multiple_of(self.imu_per_gps)
    }

    pub fn advance(&mut self) {
        self.step_index += 1;
    }
}

/// Kinematic truth at one instant, NED frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruthState {
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    pub acceleration: Vector3<f64>,
    pub t: f64,
}

impl TruthState {
    pub fn at_rest(t: f64) -> Self {
        Self {
            position: Vector3::zeros(),
            velocity: Vector3::zeros(),
            acceleration: Vector3::zeros(),
            t,
        }
    }
}

fn default_axis() -> [f64; 3] {
    [1.0, 0.0, 0.0]
}

fn default_cycles() -> u32 {
    1
}

/// Motion profile of the vehicle.
///
/// Maneuver profiles sit at the origin before `start`, run a whole number of
/// cycles that each end back at the origin at rest, and are stationary again
/// afterwards.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TrajectoryProfile {
    Stationary,
    /// Constant velocity from the origin.
    Cruise {
        velocity: [f64; 3],
    },
    /// `p(t) = amplitude * (1 - cos(2*pi*(t - start)/period)) * axis`.
    SinusoidManeuver {
        amplitude: f64,
        period: f64,
        #[serde(default = "default_axis")]
        axis: [f64; 3],
        #[serde(default)]
        start: f64,
        #[serde(default = "default_cycles")]
        cycles: u32,
    },
    /// Piecewise-constant acceleration: `+a` for one segment, `-a` for two,
    /// `+a` for one. Each cycle lasts four segments.
    StepManeuver {
        accel: f64,
        segment: f64,
        #[serde(default = "default_axis")]
        axis: [f64; 3],
        #[serde(default)]
        start: f64,
        #[serde(default = "default_cycles")]
        cycles: u32,
    },
}

impl TrajectoryProfile {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Stationary => "stationary",
            Self::Cruise { .. } => "cruise",
            Self::SinusoidManeuver { .. } => "sinusoid_maneuver",
            Self::StepManeuver { .. } => "step_maneuver",
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let check_axis = |axis: &[f64; 3]| {
            let n = Vector3::from(*axis).norm();
            if (n - 1.0).abs() > 1e-9 {
                Err(SimError::Config(format!(
                    "maneuver axis must be a unit vector, |axis|={n}"
                )))
            } else {
                Ok(())
            }
        };
        match self {
            Self::Stationary => Ok(()),
            Self::Cruise { velocity } => {
                if velocity.iter().all(|v| v.is_finite()) {
                    Ok(())
                } else {
                    Err(SimError::Config("cruise velocity must be finite".into()))
                }
            }
            Self::SinusoidManeuver {
                amplitude,
                period,
                axis,
                start,
                ..
            } => {
                check_axis(axis)?;
                if !(amplitude.is_finite() && *period > 0.0 && period.is_finite()) {
                    return Err(SimError::Config(
                        "sinusoid amplitude must be finite and period positive".into(),
                    ));
                }
                if !(*start >= 0.0) {
                    return Err(SimError::Config("maneuver start must be >= 0".into()));
                }
                Ok(())
            }
            Self::StepManeuver {
                accel,
                segment,
                axis,
                start,
                ..
            } => {
                check_axis(axis)?;
                if !(accel.is_finite() && *segment > 0.0 && segment.is_finite()) {
                    return Err(SimError::Config(
                        "step accel must be finite and segment positive".into(),
                    ));
                }
                if !(*start >= 0.0) {
                    return Err(SimError::Config("maneuver start must be >= 0".into()));
                }
                Ok(())
            }
        }
    }

    /// Window `[start, end)` during which the vehicle moves, if bounded.
    pub fn maneuver_window(&self) -> Option<(f64, f64)> {
        match *self {
            Self::SinusoidManeuver {
                period,
                start,
                cycles,
                ..
            } => Some((start, start + period * cycles as f64)),
            Self::StepManeuver {
                segment,
                start,
                cycles,
                ..
            } => Some((start, start + 4.0 * segment * cycles as f64)),
            _ => None,
        }
    }

    /// Closed-form truth at time `t`.
    pub fn evaluate(&self, t: f64) -> TruthState {
        match *self {
            Self::Stationary => TruthState::at_rest(t),
            Self::Cruise { velocity } => {
                let v = Vector3::from(velocity);
                TruthState {
                    position: v * t,
                    velocity: v,
                    acceleration: Vector3::zeros(),
                    t,
                }
            }
            Self::SinusoidManeuver {
                amplitude,
                period,
                axis,
                start,
                cycles,
            } => {
                let axis = Vector3::from(axis);
                let tau = t - start;
                let end = period * cycles as f64;
                if tau < -GRID_EPS || tau >= end - GRID_EPS {
                    return TruthState::at_rest(t);
                }
                let tau = tau.max(0.0);
                let w = 2.0 * std::f64::consts::PI / period;
                let (s, c) = (w * tau).sin_cos();
                TruthState {
                    position: axis * (amplitude * (1.0 - c)),
                    velocity: axis * (amplitude * w * s),
                    acceleration: axis * (amplitude * w * w * c),
                    t,
                }
            }
            Self::StepManeuver {
                accel,
                segment,
                axis,
                start,
                cycles,
            } => {
                let axis = Vector3::from(axis);
                let tau = t - start;
                let cycle_len = 4.0 * segment;
                if tau < -GRID_EPS || tau >= cycle_len * cycles as f64 - GRID_EPS {
                    return TruthState::at_rest(t);
                }
                let tau = tau.max(0.0);
                // Snap to the segment grid so samples that land on a breakpoint
                // pick the segment that starts there.
                let seg_index = ((tau / segment) + GRID_EPS).floor() as u64;
                let in_cycle = seg_index % 4;
                let cycle_start = (seg_index - in_cycle) as f64 * segment;
                let s = (tau - cycle_start).max(0.0);
                let t1 = segment;
                let a = accel;
                let (p, v, acc) = match in_cycle {
                    0 => (0.5 * a * s * s, a * s, a),
                    1 | 2 => {
                        let u = s - t1;
                        (
                            0.5 * a * t1 * t1 + a * t1 * u - 0.5 * a * u * u,
                            a * t1 - a * u,
                            -a,
                        )
                    }
                    _ => {
                        let u = s - 3.0 * t1;
                        (
                            0.5 * a * t1 * t1 - a * t1 * u + 0.5 * a * u * u,
                            -a * t1 + a * u,
                            a,
                        )
                    }
                };
                TruthState {
                    position: axis * p,
                    velocity: axis * v,
                    acceleration: axis * acc,
                    t,
                }
            }
        }
    }
}

/// Number of samples `ceil(duration/dt) + 1`, robust to float noise in the ratio.
pub fn sample_count(duration: f64, dt: f64) -> usize {
    let ratio = duration / dt;
    let n = if (ratio - ratio.round()).abs() < GRID_EPS * ratio.max(1.0) {
        ratio.round()
    } else {
        ratio.ceil()
    };
    n as usize + 1
}

/// Samples the profile on the grid `t_i = i * dt`, `i = 0..=ceil(duration/dt)`.
pub fn generate_trajectory(
    profile: &TrajectoryProfile,
    duration: f64,
    dt: f64,
) -> Result<Vec<TruthState>, SimError> {
    if !(duration > 0.0 && duration.is_finite()) {
        return Err(SimError::Config(format!(
            "duration must be positive, got {duration}"
        )));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(SimError::Config(format!("dt must be positive, got {dt}")));
    }
    profile.validate()?;
    let n = sample_count(duration, dt);
    Ok((0..n).map(|i| profile.evaluate(i as f64 * dt)).collect())
}

/// Flat-earth reference point for local NED coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeoRef {
    pub ref_latitude: f64,
    pub ref_longitude: f64,
    pub ref_altitude: f64,
}

impl GeoRef {
    pub fn new(ref_latitude: f64, ref_longitude: f64, ref_altitude: f64) -> Result<Self, SimError> {
        let g = Self {
            ref_latitude,
            ref_longitude,
            ref_altitude,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.ref_latitude.abs() < 89.0)
            || !self.ref_longitude.is_finite()
            || !self.ref_altitude.is_finite()
        {
            return Err(SimError::Config(format!(
                "reference latitude must be within (-89, 89) degrees, got {}",
                self.ref_latitude
            )));
        }
        Ok(())
    }

    pub fn meters_per_deg_lat(&self) -> f64 {
        MERIDIAN_RADIUS_M.to_radians()
    }

    pub fn meters_per_deg_lon(&self) -> f64 {
        MERIDIAN_RADIUS_M.to_radians() * self.ref_latitude.to_radians().cos()
    }
}

impl Default for GeoRef {
    fn default() -> Self {
        Self {
            ref_latitude: 37.5894,
            ref_longitude: 127.0323,
            ref_altitude: 40.0,
        }
    }
}

/// NED displacement to (latitude deg, longitude deg, altitude m).
pub fn ned_to_geodetic(p: &Vector3<f64>, geo: &GeoRef) -> (f64, f64, f64) {
    (
        geo.ref_latitude + p.x / geo.meters_per_deg_lat(),
        geo.ref_longitude + p.y / geo.meters_per_deg_lon(),
        geo.ref_altitude - p.z,
    )
}

pub fn geodetic_to_ned(lat: f64, lon: f64, alt: f64, geo: &GeoRef) -> Vector3<f64> {
    Vector3::new(
        (lat - geo.ref_latitude) * geo.meters_per_deg_lat(),
        (lon - geo.ref_longitude) * geo.meters_per_deg_lon(),
        geo.ref_altitude - alt,
    )
}
