//! Six-state position/velocity fusion filter (NED).
//!
//! The same code path runs inside the target and inside the attacker's
//! replica; both call these functions with identical inputs in shared-seed
//! mode and must therefore stay bit-identical.

use nalgebra::{DMatrix, DVector, Matrix3, Matrix6, Vector3, Vector6};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sensors::{GpsFix, ImuSample};

/// Maximum allowed |z.t - state.t| when forming an innovation, seconds.
pub const TIME_ALIGN_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EkfError {
    #[error("non-finite value in {what} at t={t}")]
    NonFinite { what: &'static str, t: f64 },
    #[error("innovation covariance is not invertible at t={t}")]
    SingularInnovation { t: f64 },
    #[error("measurement at t={z_t} is not aligned with state at t={state_t}")]
    Misaligned { z_t: f64, state_t: f64 },
    #[error("invalid filter parameters: {0}")]
    Params(String),
    #[error("invalid time step {0}")]
    TimeStep(f64),
}

/// Filter estimate `[p_N, p_E, p_D, v_N, v_E, v_D]` with covariance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NavState {
    pub x: Vector6<f64>,
    pub p: Matrix6<f64>,
    pub t: f64,
}

impl NavState {
    pub fn new(position: Vector3<f64>, velocity: Vector3<f64>, p: Matrix6<f64>, t: f64) -> Self {
        let mut x = Vector6::zeros();
        x.fixed_rows_mut::<3>(0).copy_from(&position);
        x.fixed_rows_mut::<3>(3).copy_from(&velocity);
        Self { x, p, t }
    }

    /// Initializes from a GPS fix with the configured initial covariance.
    pub fn from_fix(fix: &GpsFix, p0: Matrix6<f64>) -> Self {
        Self::new(fix.position, fix.velocity, p0, fix.t)
    }

    pub fn position(&self) -> Vector3<f64> {
        self.x.fixed_rows::<3>(0).into_owned()
    }

    pub fn velocity(&self) -> Vector3<f64> {
        self.x.fixed_rows::<3>(3).into_owned()
    }

    /// Symmetric to 1e-12 and positive semi-definite to -1e-9.
    pub fn covariance_ok(&self) -> bool {
        let asym = (self.p - self.p.transpose()).amax();
        if !(asym < 1e-12) {
            return false;
        }
        (self.p + Matrix6::identity() * 1e-9).cholesky().is_some()
    }

    fn check_finite(&self, what: &'static str) -> Result<(), EkfError> {
        if self.x.iter().chain(self.p.iter()).all(|v| v.is_finite()) && self.t.is_finite() {
            Ok(())
        } else {
            Err(EkfError::NonFinite { what, t: self.t })
        }
    }
}

/// Which GPS components a measurement block carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MeasurementMode {
    Position,
    Velocity,
    #[default]
    Both,
}

impl MeasurementMode {
    pub fn dim(self) -> usize {
        match self {
            Self::Position | Self::Velocity => 3,
            Self::Both => 6,
        }
    }

    /// State indices observed by this mode.
    pub fn rows(self) -> &'static [usize] {
        match self {
            Self::Position => &[0, 1, 2],
            Self::Velocity => &[3, 4, 5],
            Self::Both => &[0, 1, 2, 3, 4, 5],
        }
    }
}

/// Whether a failing gate check skips the update or only gets reported.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Gating {
    #[default]
    ReportOnly,
    RejectBeyondGate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EkfParams {
    pub q: Matrix6<f64>,
    pub r_pos: Matrix3<f64>,
    pub r_vel: Matrix3<f64>,
    pub gate: f64,
}

impl EkfParams {
    pub fn validate(&self) -> Result<(), EkfError> {
        if !(self.gate > 0.0 && self.gate.is_finite()) {
            return Err(EkfError::Params(format!(
                "gate must be > 0, got {}",
                self.gate
            )));
        }
        let psd6 = |m: &Matrix6<f64>| {
            (m - m.transpose()).amax() < 1e-12
                && (m + Matrix6::identity() * 1e-12).cholesky().is_some()
        };
        let psd3 = |m: &Matrix3<f64>| {
            (m - m.transpose()).amax() < 1e-12
                && (m + Matrix3::identity() * 1e-12).cholesky().is_some()
        };
        if !psd6(&self.q) {
            return Err(EkfError::Params("Q must be symmetric PSD".into()));
        }
        if !psd3(&self.r_pos) || !psd3(&self.r_vel) {
            return Err(EkfError::Params("R blocks must be symmetric PSD".into()));
        }
        Ok(())
    }

    /// Measurement noise for the given block.
    pub fn r(&self, mode: MeasurementMode) -> DMatrix<f64> {
        match mode {
            MeasurementMode::Position => DMatrix::from_iterator(3, 3, self.r_pos.iter().copied()),
            MeasurementMode::Velocity => DMatrix::from_iterator(3, 3, self.r_vel.iter().copied()),
            MeasurementMode::Both => {
                let mut r = DMatrix::zeros(6, 6);
                r.view_mut((0, 0), (3, 3)).copy_from(&self.r_pos);
                r.view_mut((3, 3), (3, 3)).copy_from(&self.r_vel);
                r
            }
        }
    }
}

fn default_accel_noise() -> f64 {
    0.35
}
fn default_pos_process_noise() -> f64 {
    1e-4
}
fn default_gps_pos_noise() -> f64 {
    0.5
}
fn default_gps_vel_noise() -> f64 {
    0.3
}
fn default_gate() -> f64 {
    5.0
}
fn default_p0_pos() -> f64 {
    1.0
}
fn default_p0_vel() -> f64 {
    0.5
}

/// Scalar filter tuning as written in scenario files. Noise terms are
/// standard deviations; `accel_noise` is the process-noise density on the
/// velocity states (m/s^2/sqrt(Hz)) and is multiplied by dt in `predict`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EkfConfig {
    #[serde(default = "default_accel_noise")]
    pub accel_noise: f64,
    #[serde(default = "default_pos_process_noise")]
    pub pos_process_noise: f64,
    #[serde(default = "default_gps_pos_noise")]
    pub gps_pos_noise: f64,
    #[serde(default = "default_gps_vel_noise")]
    pub gps_vel_noise: f64,
    #[serde(default = "default_gate")]
    pub gate: f64,
    #[serde(default = "default_p0_pos")]
    pub p0_pos: f64,
    #[serde(default = "default_p0_vel")]
    pub p0_vel: f64,
}

impl Default for EkfConfig {
    fn default() -> Self {
        Self {
            accel_noise: default_accel_noise(),
            pos_process_noise: default_pos_process_noise(),
            gps_pos_noise: default_gps_pos_noise(),
            gps_vel_noise: default_gps_vel_noise(),
            gate: default_gate(),
            p0_pos: default_p0_pos(),
            p0_vel: default_p0_vel(),
        }
    }
}

impl EkfConfig {
    pub fn params(&self) -> Result<EkfParams, EkfError> {
        let sigmas = [
            self.accel_noise,
            self.pos_process_noise,
            self.gps_pos_noise,
            self.gps_vel_noise,
            self.p0_pos,
            self.p0_vel,
        ];
        if !sigmas.iter().all(|s| *s >= 0.0 && s.is_finite()) {
            return Err(EkfError::Params(
                "noise terms must be finite and >= 0".into(),
            ));
        }
        let qp = self.pos_process_noise.powi(2);
        let qv = self.accel_noise.powi(2);
        let params = EkfParams {
            q: Matrix6::from_diagonal(&Vector6::new(qp, qp, qp, qv, qv, qv)),
            r_pos: Matrix3::identity() * self.gps_pos_noise.powi(2),
            r_vel: Matrix3::identity() * self.gps_vel_noise.powi(2),
            gate: self.gate,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn p0(&self) -> Matrix6<f64> {
        let pp = self.p0_pos.powi(2);
        let pv = self.p0_vel.powi(2);
        Matrix6::from_diagonal(&Vector6::new(pp, pp, pp, pv, pv, pv))
    }
}

/// Measurement residual `r = z - H x` and its covariance `S = H P H^T + R`.
#[derive(Debug, Clone, PartialEq)]
pub struct Innovation {
    pub r: DVector<f64>,
    pub s: DMatrix<f64>,
    pub t: f64,
    pub mode: MeasurementMode,
}

impl Innovation {
    /// Per-component `r_i^2 / (S_ii * G^2)`.
    pub fn test_ratios(&self, gate: f64) -> Result<Vec<f64>, EkfError> {
        (0..self.r.len())
            .map(|i| {
                let sii = self.s[(i, i)];
                if !(sii > 0.0) {
                    return Err(EkfError::SingularInnovation { t: self.t });
                }
                Ok(self.r[i] * self.r[i] / (sii * gate * gate))
            })
            .collect()
    }

    /// True when any component violates the gate, i.e. `r_i^2 > S_ii * G^2`.
    pub fn exceeds_gate(&self, gate: f64) -> Result<bool, EkfError> {
        Ok(self.test_ratios(gate)?.iter().any(|tr| *tr > 1.0))
    }
}

pub(crate) fn symmetrize(p: &Matrix6<f64>) -> Matrix6<f64> {
    (p + p.transpose()) * 0.5
}

fn transition(dt: f64) -> Matrix6<f64> {
    let mut f = Matrix6::identity();
    for i in 0..3 {
        f[(i, i + 3)] = dt;
    }
    f
}

/// Propagates the estimate with one accelerometer sample:
/// `v += a dt`, `p += v dt + a dt^2 / 2`, `P = F P F^T + Q dt`.
pub fn predict(
    state: &NavState,
    imu: &ImuSample,
    dt: f64,
    params: &EkfParams,
) -> Result<NavState, EkfError> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(EkfError::TimeStep(dt));
    }
    state.check_finite("state")?;
    if !imu.accel.iter().all(|a| a.is_finite()) {
        return Err(EkfError::NonFinite {
            what: "imu sample",
            t: imu.t,
        });
    }
    let pos = state.position();
    let vel = state.velocity();
    let new_pos = pos + vel * dt + imu.accel * (0.5 * dt * dt);
    let new_vel = vel + imu.accel * dt;
    let f = transition(dt);
    let p = symmetrize(&(f * state.p * f.transpose() + params.q * dt));
    let out = NavState::new(new_pos, new_vel, p, state.t + dt);
    out.check_finite("predicted state")?;
    debug_assert!(
        out.covariance_ok(),
        "covariance lost PSD in predict at t={}",
        out.t
    );
    Ok(out)
}

fn measurement_vector(z: &GpsFix, mode: MeasurementMode) -> DVector<f64> {
    match mode {
        MeasurementMode::Position => DVector::from_column_slice(z.position.as_slice()),
        MeasurementMode::Velocity => DVector::from_column_slice(z.velocity.as_slice()),
        MeasurementMode::Both => {
            DVector::from_iterator(6, z.position.iter().chain(z.velocity.iter()).copied())
        }
    }
}

/// Residual of a GPS fix against the (predicted) state.
pub fn innovation(
    state: &NavState,
    z: &GpsFix,
    params: &EkfParams,
    mode: MeasurementMode,
) -> Result<Innovation, EkfError> {
    if (z.t - state.t).abs() > TIME_ALIGN_TOLERANCE {
        return Err(EkfError::Misaligned {
            z_t: z.t,
            state_t: state.t,
        });
    }
    if !z
        .position
        .iter()
        .chain(z.velocity.iter())
        .all(|v| v.is_finite())
    {
        return Err(EkfError::NonFinite {
            what: "gps fix",
            t: z.t,
        });
    }
    let rows = mode.rows();
    let m = rows.len();
    let zv = measurement_vector(z, mode);
    let r = DVector::from_fn(m, |i, _| zv[i] - state.x[rows[i]]);
    let s = DMatrix::from_fn(m, m, |i, j| state.p[(rows[i], rows[j])]) + params.r(mode);
    if s.clone().cholesky().is_none() {
        return Err(EkfError::SingularInnovation { t: state.t });
    }
    Ok(Innovation {
        r,
        s,
        t: state.t,
        mode,
    })
}

/// Kalman update. Returns the new state and whether the measurement was fused.
pub fn update(
    state: &NavState,
    innov: &Innovation,
    params: &EkfParams,
    gating: Gating,
) -> Result<(NavState, bool), EkfError> {
    if gating == Gating::RejectBeyondGate && innov.exceeds_gate(params.gate)? {
        return Ok((*state, false));
    }
    let rows = innov.mode.rows();
    let m = rows.len();
    let chol = innov
        .s
        .clone()
        .cholesky()
        .ok_or(EkfError::SingularInnovation { t: state.t })?;
    // P H^T (6 x m) and H P (m x 6); H selects `rows`.
    let pht = DMatrix::from_fn(6, m, |i, j| state.p[(i, rows[j])]);
    let hp = pht.transpose();
    // K^T = S^-1 H P
    let kt = chol.solve(&hp);
    let k = kt.transpose();
    let dx = &k * &innov.r;
    let mut x = state.x;
    for i in 0..6 {
        x[i] += dx[i];
    }
    // (I - K H) P = P - K (H P)
    let khp = &k * &hp;
    let mut p = state.p;
    for i in 0..6 {
        for j in 0..6 {
            p[(i, j)] -= khp[(i, j)];
        }
    }
    let out = NavState {
        x,
        p: symmetrize(&p),
        t: state.t,
    };
    out.check_finite("updated state")?;
    debug_assert!(
        out.covariance_ok(),
        "covariance lost PSD in update at t={}",
        out.t
    );
    Ok((out, true))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sensors::FixOrigin;

    fn params() -> EkfParams {
        EkfConfig::default().params().unwrap()
    }

    fn imu(a: [f64; 3]) -> ImuSample {
        ImuSample {
            accel: Vector3::from(a),
            t: 0.0,
        }
    }

    fn fix(pos: [f64; 3], vel: [f64; 3], t: f64) -> GpsFix {
        GpsFix {
            position: Vector3::from(pos),
            velocity: Vector3::from(vel),
            t,
            origin: FixOrigin::Authentic,
        }
    }

    #[test]
    fn rest_state_only_grows_covariance() {
        let prm = params();
        let s0 = NavState::new(Vector3::zeros(), Vector3::zeros(), Matrix6::zeros(), 0.0);
        let s1 = predict(&s0, &imu([0.0; 3]), 0.25, &prm).unwrap();
        assert_eq!(s1.x, Vector6::zeros());
        assert!((s1.p - prm.q * 0.25).amax() < 1e-15);
        assert_eq!(s1.t, 0.25);
    }

    #[test]
    fn constant_velocity_prediction() {
        let s0 = NavState::new(
            Vector3::zeros(),
            Vector3::new(1.0, 0.0, 0.0),
            Matrix6::identity(),
            0.0,
        );
        let s1 = predict(&s0, &imu([0.0; 3]), 1.0, &params()).unwrap();
        assert_eq!(s1.position(), Vector3::new(1.0, 0.0, 0.0));
    }

    #[test]
    fn constant_acceleration_prediction() {
        let s0 = NavState::new(Vector3::zeros(), Vector3::zeros(), Matrix6::identity(), 0.0);
        let s1 = predict(&s0, &imu([2.0, 0.0, 0.0]), 0.5, &params()).unwrap();
        // 0.5 * 2 * 0.5^2 = 0.25, 2 * 0.5 = 1
        assert_eq!(s1.velocity(), Vector3::new(1.0, 0.0, 0.0));
        assert_eq!(s1.position(), Vector3::new(0.25, 0.0, 0.0));
    }

    #[test]
    fn predict_rejects_non_finite_input() {
        let s0 = NavState::new(Vector3::zeros(), Vector3::zeros(), Matrix6::identity(), 0.0);
        assert!(matches!(
            predict(&s0, &imu([f64::NAN, 0.0, 0.0]), 0.1, &params()),
            Err(EkfError::NonFinite { .. })
        ));
        assert!(matches!(
            predict(&s0, &imu([0.0; 3]), 0.0, &params()),
            Err(EkfError::TimeStep(_))
        ));
    }

    #[test]
    fn zero_residual_and_noise_only_covariance() {
        let mut prm = params();
        prm.r_pos = Matrix3::identity() * 0.09;
        let s = NavState::new(
            Vector3::new(1.0, 2.0, 3.0),
            Vector3::zeros(),
            Matrix6::zeros(),
            1.0,
        );
        let inn = innovation(
            &s,
            &fix([1.0, 2.0, 3.0], [0.0; 3], 1.0),
            &prm,
            MeasurementMode::Position,
        )
        .unwrap();
        assert_eq!(inn.r, DVector::zeros(3));
        assert!((inn.s.clone() - DMatrix::identity(3, 3) * 0.09).amax() < 1e-15);
    }

    #[test]
    fn innovation_covariance_arithmetic() {
        let mut prm = params();
        prm.r_pos = Matrix3::identity() * 0.25;
        let s = NavState::new(Vector3::zeros(), Vector3::zeros(), Matrix6::identity(), 0.0);
        let inn = innovation(
            &s,
            &fix([0.0; 3], [0.0; 3], 0.0),
            &prm,
            MeasurementMode::Position,
        )
        .unwrap();
        assert!((inn.s.clone() - DMatrix::identity(3, 3) * 1.25).amax() < 1e-15);
    }

    #[test]
    fn singular_innovation_is_reported() {
        let mut prm = params();
        prm.r_pos = Matrix3::zeros();
        let s = NavState::new(Vector3::zeros(), Vector3::zeros(), Matrix6::zeros(), 0.0);
        assert!(matches!(
            innovation(
                &s,
                &fix([0.0; 3], [0.0; 3], 0.0),
                &prm,
                MeasurementMode::Position
            ),
            Err(EkfError::SingularInnovation { .. })
        ));
    }

    #[test]
    fn misaligned_fix_is_rejected() {
        let s = NavState::new(Vector3::zeros(), Vector3::zeros(), Matrix6::identity(), 0.0);
        assert!(matches!(
            innovation(
                &s,
                &fix([0.0; 3], [0.0; 3], 0.2),
                &params(),
                MeasurementMode::Both
            ),
            Err(EkfError::Misaligned { .. })
        ));
    }

    #[test]
    fn zero_residual_update_shrinks_covariance() {
        let prm = params();
        let s = NavState::new(
            Vector3::new(3.0, 0.0, 0.0),
            Vector3::zeros(),
            Matrix6::identity(),
            0.0,
        );
        let inn = innovation(
            &s,
            &fix([3.0, 0.0, 0.0], [0.0; 3], 0.0),
            &prm,
            MeasurementMode::Both,
        )
        .unwrap();
        let (s2, applied) = update(&s, &inn, &prm, Gating::ReportOnly).unwrap();
        assert!(applied);
        assert_eq!(s2.x, s.x);
        assert!(s2.p.trace() < s.p.trace());
    }

    #[test]
    fn scalar_gain_hand_computation() {
        // P = 1 and R = 1 on the N position axis, r = 2 -> K = 0.5, correction 1.0
        let mut p = Matrix6::zeros();
        p[(0, 0)] = 1.0;
        let prm = EkfParams {
            q: Matrix6::zeros(),
            r_pos: Matrix3::identity(),
            r_vel: Matrix3::identity(),
            gate: 5.0,
        };
        let s = NavState::new(Vector3::zeros(), Vector3::zeros(), p, 0.0);
        let inn = innovation(
            &s,
            &fix([2.0, 0.0, 0.0], [0.0; 3], 0.0),
            &prm,
            MeasurementMode::Position,
        )
        .unwrap();
        let (s2, _) = update(&s, &inn, &prm, Gating::ReportOnly).unwrap();
        assert!((s2.x[0] - 1.0).abs() < 1e-15);
        assert!((s2.p[(0, 0)] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn gate_rejection_leaves_state_untouched() {
        // S = 1, G = 1, r = sqrt(1.5) -> test ratio 1.5
        let prm = EkfParams {
            q: Matrix6::zeros(),
            r_pos: Matrix3::identity() * 0.5,
            r_vel: Matrix3::identity(),
            gate: 1.0,
        };
        let mut p = Matrix6::zeros();
        for i in 0..3 {
            p[(i, i)] = 0.5;
        }
        let s = NavState::new(Vector3::zeros(), Vector3::zeros(), p, 0.0);
        let inn = innovation(
            &s,
            &fix([1.5f64.sqrt(), 0.0, 0.0], [0.0; 3], 0.0),
            &prm,
            MeasurementMode::Position,
        )
        .unwrap();
        assert!((inn.test_ratios(1.0).unwrap()[0] - 1.5).abs() < 1e-12);
        let (s2, applied) = update(&s, &inn, &prm, Gating::RejectBeyondGate).unwrap();
        assert!(!applied);
        assert_eq!(s2, s);
        let (_, applied) = update(&s, &inn, &prm, Gating::ReportOnly).unwrap();
        assert!(applied);
    }

    #[test]
    fn default_params_are_valid() {
        let cfg = EkfConfig::default();
        assert_eq!(cfg.gate, 5.0);
        cfg.params().unwrap();
        let mut bad = cfg;
        bad.gate = 0.0;
        assert!(bad.params().is_err());
    }
}
