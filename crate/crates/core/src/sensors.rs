//! Seeded stochastic sensor models: the target's IMU, the attacker's external
//! IMU and GPS receivers.
//!
//! Each sensor owns its RNG stream. Draw order is fixed (bias walk, then white
//! noise, per axis N/E/D), so a stream is a pure function of the seed and the
//! number of samples taken.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::simcore::{SimError, TruthState};

/// Salt separating the per-run bias draw from the noise stream of the same seed.
const BIAS_STREAM_SALT: u64 = 0x9E37_79B9_7F4A_7C15;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImuModel {
    pub bias: Vector3<f64>,
    pub bias_walk_sigma: f64,
    pub white_noise_sigma: f64,
    pub seed: u64,
}

fn default_bias_range() -> f64 {
    0.05
}
fn default_walk() -> f64 {
    0.001
}
fn default_white() -> f64 {
    0.02
}

/// IMU parameters as written in a scenario file. When `bias` is omitted it is
/// drawn uniformly from `[-bias_range, bias_range]` per axis using `seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImuConfig {
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bias: Option<[f64; 3]>,
    #[serde(default = "default_bias_range")]
    pub bias_range: f64,
    #[serde(default = "default_walk")]
    pub bias_walk_sigma: f64,
    #[serde(default = "default_white")]
    pub white_noise_sigma: f64,
}

impl ImuConfig {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            bias: None,
            bias_range: default_bias_range(),
            bias_walk_sigma: default_walk(),
            white_noise_sigma: default_white(),
        }
    }

    pub fn noiseless(seed: u64) -> Self {
        Self {
            seed,
            bias: Some([0.0; 3]),
            bias_range: 0.0,
            bias_walk_sigma: 0.0,
            white_noise_sigma: 0.0,
        }
    }

    pub fn model(&self) -> Result<ImuModel, SimError> {
        if !(self.bias_range >= 0.0 && self.bias_walk_sigma >= 0.0 && self.white_noise_sigma >= 0.0)
        {
            return Err(SimError::Config(
                "IMU sigmas and bias range must be >= 0".into(),
            ));
        }
        let bias = match self.bias {
            Some(b) => Vector3::from(b),
            None => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ BIAS_STREAM_SALT);
                let r = self.bias_range;
                Vector3::from_fn(|_, _| {
                    if r > 0.0 {
                        rng.random_range(-r..=r)
                    } else {
                        0.0
                    }
                })
            }
        };
        if !bias.iter().all(|b| b.is_finite()) {
            return Err(SimError::Config("IMU bias must be finite".into()));
        }
        Ok(ImuModel {
            bias,
            bias_walk_sigma: self.bias_walk_sigma,
            white_noise_sigma: self.white_noise_sigma,
            seed: self.seed,
        })
    }
}

/// Accelerometer reading in NED.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImuSample {
    pub accel: Vector3<f64>,
    pub t: f64,
}

/// Stateful IMU: constant bias plus a random-walk drift plus white noise.
#[derive(Debug, Clone)]
pub struct ImuSensor {
    model: ImuModel,
    walk: Vector3<f64>,
    walk_step_sigma: f64,
    rng: ChaCha8Rng,
}

impl ImuSensor {
    pub fn new(model: ImuModel, dt_imu: f64) -> Self {
        Self {
            walk_step_sigma: model.bias_walk_sigma * dt_imu.sqrt(),
            walk: Vector3::zeros(),
            rng: ChaCha8Rng::seed_from_u64(model.seed),
            model,
        }
    }

    pub fn model(&self) -> &ImuModel {
        &self.model
    }

    /// Current total bias (constant part plus walk).
    pub fn bias(&self) -> Vector3<f64> {
        self.model.bias + self.walk
    }

    pub fn sample(&mut self, truth: &TruthState) -> ImuSample {
        let mut noise = Vector3::zeros();
        for i in 0..3 {
            let w: f64 = self.rng.sample(StandardNormal);
            let n: f64 = self.rng.sample(StandardNormal);
            self.walk[i] += self.walk_step_sigma * w;
            noise[i] = self.model.white_noise_sigma * n;
        }
        ImuSample {
            accel: truth.acceleration + self.model.bias + self.walk + noise,
            t: truth.t,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FixOrigin {
    Authentic,
    Spoofed,
}

/// One GPS solution in NED. `origin` is bookkeeping for logs; the target
/// filter never branches on it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GpsFix {
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    pub t: f64,
    pub origin: FixOrigin,
}

fn default_pos_sigma() -> f64 {
    0.5
}
fn default_vel_sigma() -> f64 {
    0.1
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GpsModel {
    #[serde(default = "default_pos_sigma")]
    pub pos_noise_sigma: f64,
    #[serde(default = "default_vel_sigma")]
    pub vel_noise_sigma: f64,
    pub seed: u64,
}

impl GpsModel {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            pos_noise_sigma: default_pos_sigma(),
            vel_noise_sigma: default_vel_sigma(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.pos_noise_sigma >= 0.0 && self.vel_noise_sigma >= 0.0 {
            Ok(())
        } else {
            Err(SimError::Config("GPS sigmas must be >= 0".into()))
        }
    }
}

#[derive(Debug, Clone)]
pub struct GpsSensor {
    model: GpsModel,
    rng: ChaCha8Rng,
}

impl GpsSensor {
    pub fn new(model: GpsModel) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(model.seed),
            model,
        }
    }

    pub fn model(&self) -> &GpsModel {
        &self.model
    }

    pub fn sample(&mut self, truth: &TruthState) -> GpsFix {
        let mut dp = Vector3::zeros();
        let mut dv = Vector3::zeros();
        for i in 0..3 {
            let n: f64 = self.rng.sample(StandardNormal);
            dp[i] = self.model.pos_noise_sigma * n;
        }
        for i in 0..3 {
            let n: f64 = self.rng.sample(StandardNormal);
            dv[i] = self.model.vel_noise_sigma * n;
        }
        GpsFix {
            position: truth.position + dp,
            velocity: truth.velocity + dv,
            t: truth.t,
            origin: FixOrigin::Authentic,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn still(t: f64) -> TruthState {
        TruthState::at_rest(t)
    }

    fn mean_std(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
        (m, v.sqrt())
    }

    #[test]
    fn noiseless_imu_reports_truth() {
        let mut imu = ImuSensor::new(ImuConfig::noiseless(3).model().unwrap(), 0.005);
        let mut truth = still(0.0);
        truth.acceleration = Vector3::new(0.3, -1.2, 9.0);
        for _ in 0..100 {
            assert_eq!(imu.sample(&truth).accel, truth.acceleration);
        }
    }

    #[test]
    fn constant_bias_only() {
        let mut cfg = ImuConfig::noiseless(3);
        cfg.bias = Some([0.05, 0.0, 0.0]);
        let mut imu = ImuSensor::new(cfg.model().unwrap(), 0.005);
        for k in 0..50 {
            assert_eq!(
                imu.sample(&still(k as f64 * 0.005)).accel,
                Vector3::new(0.05, 0.0, 0.0)
            );
        }
    }

    #[test]
    fn white_noise_statistics() {
        let cfg = ImuConfig {
            seed: 11,
            bias: Some([0.01, 0.0, 0.0]),
            bias_range: 0.0,
            bias_walk_sigma: 0.0,
            white_noise_sigma: 0.02,
        };
        let mut imu = ImuSensor::new(cfg.model().unwrap(), 0.005);
        let n = 100_000;
        let xs: Vec<f64> = (0..n).map(|_| imu.sample(&still(0.0)).accel.x).collect();
        let (m, s) = mean_std(&xs);
        assert!((m - 0.01).abs() < 4.0 * 0.02 / (n as f64).sqrt());
        assert!((s - 0.02).abs() < 0.05 * 0.02);
    }

    #[test]
    fn drawn_bias_is_within_range_and_seeded() {
        let a = ImuConfig::with_seed(5).model().unwrap();
        let b = ImuConfig::with_seed(5).model().unwrap();
        let c = ImuConfig::with_seed(6).model().unwrap();
        assert_eq!(a.bias, b.bias);
        assert_ne!(a.bias, c.bias);
        assert!(a.bias.iter().all(|x| x.abs() <= 0.05));
    }

    #[test]
    fn shared_seed_streams_are_identical() {
        let m = ImuConfig::with_seed(42).model().unwrap();
        let mut a = ImuSensor::new(m, 0.005);
        let mut b = ImuSensor::new(m, 0.005);
        for k in 0..1000 {
            let t = still(k as f64 * 0.005);
            assert_eq!(a.sample(&t), b.sample(&t));
        }
    }

    #[test]
    fn independent_seeds_are_uncorrelated() {
        let cfg = |seed| ImuConfig {
            seed,
            bias: Some([0.0; 3]),
            bias_range: 0.0,
            bias_walk_sigma: 0.0,
            white_noise_sigma: 0.02,
        };
        let mut a = ImuSensor::new(cfg(1).model().unwrap(), 0.005);
        let mut b = ImuSensor::new(cfg(2).model().unwrap(), 0.005);
        let n = 100_000;
        let (xa, xb): (Vec<f64>, Vec<f64>) = (0..n)
            .map(|_| (a.sample(&still(0.0)).accel.x, b.sample(&still(0.0)).accel.x))
            .unzip();
        let (ma, sa) = mean_std(&xa);
        let (mb, sb) = mean_std(&xb);
        let cov = xa
            .iter()
            .zip(&xb)
            .map(|(x, y)| (x - ma) * (y - mb))
            .sum::<f64>()
            / (n as f64 - 1.0);
        assert!((cov / (sa * sb)).abs() < 0.05);
    }

    #[test]
    fn gps_noiseless_and_statistics() {
        let mut exact = GpsSensor::new(GpsModel {
            pos_noise_sigma: 0.0,
            vel_noise_sigma: 0.0,
            seed: 1,
        });
        let mut truth = still(2.0);
        truth.position = Vector3::new(1.0, 2.0, 3.0);
        truth.velocity = Vector3::new(-1.0, 0.5, 0.0);
        let f = exact.sample(&truth);
        assert_eq!(
            (f.position, f.velocity, f.t),
            (truth.position, truth.velocity, 2.0)
        );
        assert_eq!(f.origin, FixOrigin::Authentic);

        let mut gps = GpsSensor::new(GpsModel {
            pos_noise_sigma: 0.5,
            vel_noise_sigma: 0.1,
            seed: 9,
        });
        let fixes: Vec<GpsFix> = (0..10_000).map(|_| gps.sample(&truth)).collect();
        for axis in 0..3 {
            let xs: Vec<f64> = fixes.iter().map(|f| f.position[axis]).collect();
            let (_, s) = mean_std(&xs);
            assert!((s - 0.5).abs() < 0.05 * 0.5, "axis {axis} std {s}");
        }
    }
}
