use nalgebra::Vector3;

use crate::attack::{attack_start, AttackerSetup, AttackerState, Strategy};
use crate::detect::{normalized_velocity_innovation, DetectorState};
use crate::ekf::{self, MeasurementMode, NavState};
use crate::sensors::{GpsFix, GpsSensor, ImuSensor};
use crate::simcore::{generate_trajectory, ned_to_geodetic, GeoRef, SimClock};
use crate::wirecodec::{self, RawFrame, GPS_INJECT_MSGID};

use super::config::{AttackConfig, ScenarioConfig};
use super::metrics::{compute_metrics, Summary};
use super::HarnessError;

/// One GPS epoch. Components that the fusion mode does not measure are NaN.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRow {
    pub t: f64,
    pub attack_active: bool,
    pub applied: bool,
    pub truth_pos: [f64; 3],
    pub truth_vel: [f64; 3],
    pub prior_pos: [f64; 3],
    pub prior_vel: [f64; 3],
    pub est_pos: [f64; 3],
    pub est_vel: [f64; 3],
    pub z_pos: [f64; 3],
    pub z_vel: [f64; 3],
    pub r: [f64; 6],
    pub s_diag: [f64; 6],
    pub test_ratio: [f64; 6],
    pub cusum: [f64; 6],
    pub cusum_norm: f64,
    pub vel_innov_norm: f64,
    pub truth_lat: f64,
    pub truth_lon: f64,
    pub est_lat: f64,
    pub est_lon: f64,
    pub z_lat: f64,
    pub z_lon: f64,
}

impl EpochRow {
    /// Largest defined per-axis test ratio.
    pub fn max_test_ratio(&self) -> f64 {
        self.test_ratio.iter().copied().fold(f64::NAN, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunLog {
    pub name: String,
    pub strategy: Option<Strategy>,
    pub correlation_horizon: Option<usize>,
    pub rows: Vec<EpochRow>,
    /// Frames that went on air, in order.
    pub frames: Vec<Vec<u8>>,
    pub summary: Summary,
}

impl RunLog {
    pub fn from_rows(
        name: &str,
        rows: Vec<EpochRow>,
        correlation_horizon: Option<usize>,
    ) -> Result<Self, HarnessError> {
        let summary = compute_metrics(&rows, correlation_horizon)?;
        Ok(Self {
            name: name.to_string(),
            strategy: None,
            correlation_horizon,
            rows,
            frames: Vec::new(),
            summary,
        })
    }
}

fn arr(v: Vector3<f64>) -> [f64; 3] {
    [v.x, v.y, v.z]
}

fn spread(mode: MeasurementMode, values: &[f64]) -> [f64; 6] {
    let mut out = [f64::NAN; 6];
    for (i, row) in mode.rows().iter().enumerate() {
        out[*row] = values[i];
    }
    out
}

fn latlon(p: &Vector3<f64>, geo: &GeoRef) -> (f64, f64) {
    let (lat, lon, _) = ned_to_geodetic(p, geo);
    (lat, lon)
}

/// Encodes, schedules and decodes one spoofed fix; returns what the target receives.
struct WireLink {
    seq: u8,
    frames: Vec<Vec<u8>>,
}

impl WireLink {
    fn transmit(
        &mut self,
        z: &GpsFix,
        cfg: &AttackConfig,
        geo: &GeoRef,
    ) -> Result<GpsFix, HarnessError> {
        let wire_err = |message: String| HarnessError::Wire { t: z.t, message };
        let bytes = wirecodec::encode(z, geo, self.seq).map_err(|e| wire_err(e.to_string()))?;
        let (gps, _) = wirecodec::decode_frame(&bytes).map_err(|e| wire_err(e.to_string()))?;
        self.seq = self.seq.wrapping_add(1);
        let mut pending = vec![gps];
        if cfg.heartbeat {
            pending.push(RawFrame::heartbeat(self.seq));
            self.seq = self.seq.wrapping_add(1);
        }
        let mut received = None;
        for frame in wirecodec::schedule_tx(&cfg.tx, &pending) {
            let bytes = frame.to_bytes().map_err(|e| wire_err(e.to_string()))?;
            if frame.msgid == GPS_INJECT_MSGID {
                let d = wirecodec::decode(&bytes, geo).map_err(|e| wire_err(e.to_string()))?;
                received = Some(d.fix);
            }
            self.frames.push(bytes);
        }
        received.ok_or_else(|| wire_err("scheduler dropped the injected fix".into()))
    }
}

/// Runs one scenario to completion.
///
/// Per GPS epoch: the attacker produces a fix, the wire path (if enabled)
/// quantizes it, then the target computes the innovation, updates the
/// detectors and fuses. IMU prediction follows for the next interval.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<RunLog, HarnessError> {
    cfg.validate()?;
    let clock = SimClock::new(cfg.dt_imu, cfg.dt_gps)?;
    let truth = generate_trajectory(&cfg.trajectory, cfg.duration, cfg.dt_imu)?;
    let params = cfg
        .ekf
        .params()
        .map_err(|e| HarnessError::Config(e.to_string()))?;
    let p0 = cfg.ekf.p0();
    let gate = params.gate;
    let geo = cfg.geo;
    let per_epoch = clock.imu_per_gps();

    let mut target_imu = ImuSensor::new(cfg.sensors.target_imu.model()?, cfg.dt_imu);
    let mut attacker_imu = ImuSensor::new(cfg.sensors.attacker_imu.model()?, cfg.dt_imu);
    let mut target_gps = GpsSensor::new(cfg.sensors.gps);
    let mut attacker_gps = GpsSensor::new(cfg.sensors.attacker_gps);

    let mut target: Option<NavState> = None;
    let mut attacker: Option<AttackerState> = None;
    let mut detector = DetectorState::new(cfg.fusion.dim(), cfg.detector.correlation_horizon);
    let mut link = WireLink {
        seq: 0,
        frames: Vec::new(),
    };
    let mut rows = Vec::with_capacity(truth.len() / per_epoch as usize + 1);

    for (step, tr) in truth.iter().enumerate() {
        let step = step as u64;
        let t = clock.time_at(step);
        let numeric = |message: String| HarnessError::Numeric { step, t, message };

        if step.is_multiple_of(per_epoch) {
            let own_fix = target_gps.sample(tr);
            let att_fix = attacker_gps.sample(tr);
            let mut att_fix_t = att_fix;
            att_fix_t.t = t;

            let active = cfg.attack.as_ref().filter(|a| a.active_at(t));
            let z = match active {
                Some(a) => {
                    if attacker.is_none() {
                        let setup = AttackerSetup {
                            strategy: a.strategy,
                            delta_p: a.delta_p,
                            velocity: a.velocity,
                            params: params.clone(),
                            p0,
                            fusion: cfg.fusion,
                            gating: a.replica_gating.unwrap_or(cfg.gating),
                        };
                        attacker = Some(
                            attack_start(setup, Some(&att_fix_t))
                                .map_err(|e| numeric(e.to_string()))?,
                        );
                    }
                    let att = attacker.as_mut().expect("attacker started above");
                    let z = att
                        .next_spoof(t, &att_fix_t)
                        .map_err(|e| numeric(e.to_string()))?;
                    let sent = if a.wire {
                        link.transmit(&z, a, &geo)?
                    } else {
                        z
                    };
                    att.acknowledge(&sent);
                    sent
                }
                None => {
                    attacker = None;
                    let mut f = own_fix;
                    f.t = t;
                    f
                }
            };

            let prior = *target.get_or_insert_with(|| {
                let mut s = NavState::from_fix(&z, p0);
                s.t = t;
                s
            });
            let innov = ekf::innovation(&prior, &z, &params, cfg.fusion)
                .map_err(|e| numeric(e.to_string()))?;
            detector
                .observe(&innov, gate)
                .map_err(|e| numeric(e.to_string()))?;
            let (post, applied) = ekf::update(&prior, &innov, &params, cfg.gating)
                .map_err(|e| numeric(e.to_string()))?;
            target = Some(post);

            let r = spread(cfg.fusion, innov.r.as_slice());
            let s_diag: Vec<f64> = (0..innov.s.nrows()).map(|i| innov.s[(i, i)]).collect();
            let vel_innov_norm = if r[3].is_nan() {
                f64::NAN
            } else {
                normalized_velocity_innovation(&Vector3::new(r[3], r[4], r[5]), &prior.velocity())
            };
            let (truth_lat, truth_lon) = latlon(&tr.position, &geo);
            let (est_lat, est_lon) = latlon(&post.position(), &geo);
            let (z_lat, z_lon) = latlon(&z.position, &geo);
            rows.push(EpochRow {
                t,
                attack_active: active.is_some(),
                applied,
                truth_pos: arr(tr.position),
                truth_vel: arr(tr.velocity),
                prior_pos: arr(prior.position()),
                prior_vel: arr(prior.velocity()),
                est_pos: arr(post.position()),
                est_vel: arr(post.velocity()),
                z_pos: arr(z.position),
                z_vel: arr(z.velocity),
                r,
                s_diag: spread(cfg.fusion, &s_diag),
                test_ratio: spread(cfg.fusion, &detector.last_test_ratio),
                cusum: spread(cfg.fusion, detector.cusum.as_slice()),
                cusum_norm: detector.norm_cusum,
                vel_innov_norm,
                truth_lat,
                truth_lon,
                est_lat,
                est_lon,
                z_lat,
                z_lon,
            });
        }

        let imu_t = target_imu.sample(tr);
        let imu_a = attacker_imu.sample(tr);
        if step + 1 < truth.len() as u64 {
            if let Some(state) = target.as_mut() {
                *state = ekf::predict(state, &imu_t, cfg.dt_imu, &params)
                    .map_err(|e| numeric(e.to_string()))?;
            }
            if let Some(att) = attacker.as_mut() {
                att.propagate(&imu_a, cfg.dt_imu)
                    .map_err(|e| numeric(e.to_string()))?;
            }
        }
    }

    let summary = compute_metrics(&rows, cfg.detector.correlation_horizon)?;
    Ok(RunLog {
        name: cfg.name.clone(),
        strategy: cfg.strategy(),
        correlation_horizon: cfg.detector.correlation_horizon,
        rows,
        frames: link.frames,
        summary,
    })
}
