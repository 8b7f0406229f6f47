use nalgebra::{Matrix6, Vector3};
use proptest::prelude::*;

use spoofsim::detect::correlation;
use spoofsim::ekf::{self, EkfConfig, Gating, MeasurementMode, NavState};
use spoofsim::sensors::{FixOrigin, GpsFix, ImuSample};
use spoofsim::simcore::{geodetic_to_ned, ned_to_geodetic, GeoRef};

fn mode(i: u8) -> MeasurementMode {
    [
        MeasurementMode::Position,
        MeasurementMode::Velocity,
        MeasurementMode::Both,
    ][i as usize % 3]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn covariance_stays_symmetric_positive_definite(
        accels in proptest::collection::vec(prop::array::uniform3(-5.0f64..5.0), 1..200),
        residuals in proptest::collection::vec(prop::array::uniform6(-3.0f64..3.0), 1..50),
        accel_noise in 0.01f64..2.0,
        gps_pos in 0.05f64..3.0,
        gps_vel in 0.02f64..1.0,
        m in any::<u8>(),
    ) {
        let cfg = EkfConfig { accel_noise, gps_pos_noise: gps_pos, gps_vel_noise: gps_vel, ..EkfConfig::default() };
        let params = cfg.params().unwrap();
        let mut s = NavState::new(Vector3::zeros(), Vector3::zeros(), cfg.p0(), 0.0);
        for (k, a) in accels.iter().enumerate() {
            s = ekf::predict(&s, &ImuSample { accel: Vector3::from(*a), t: s.t }, 0.01, &params).unwrap();
            prop_assert!(s.covariance_ok());
            if k % 4 == 3 {
                let r = residuals[k % residuals.len()];
                let z = GpsFix {
                    position: s.position() + Vector3::new(r[0], r[1], r[2]),
                    velocity: s.velocity() + Vector3::new(r[3], r[4], r[5]),
                    t: s.t,
                    origin: FixOrigin::Authentic,
                };
                let before: Matrix6<f64> = s.p;
                let innov = ekf::innovation(&s, &z, &params, mode(m)).unwrap();
                s = ekf::update(&s, &innov, &params, Gating::ReportOnly).unwrap().0;
                prop_assert!(s.covariance_ok());
                for i in 0..6 {
                    prop_assert!(s.p[(i, i)] <= before[(i, i)] + 1e-12);
                }
            }
        }
    }

    #[test]
    fn correlation_is_affine_invariant(
        xs in proptest::collection::vec(-100.0f64..100.0, 3..60),
        noise in proptest::collection::vec(-1.0f64..1.0, 60),
        a in 0.1f64..10.0,
        b in -50.0f64..50.0,
    ) {
        let ys: Vec<f64> = xs.iter().zip(&noise).map(|(x, n)| 0.3 * x + n).collect();
        if let Ok(r) = correlation(&xs, &ys) {
            let scaled: Vec<f64> = xs.iter().map(|x| a * x + b).collect();
            let flipped: Vec<f64> = xs.iter().map(|x| -a * x + b).collect();
            prop_assert!((correlation(&scaled, &ys).unwrap() - r).abs() < 1e-9);
            prop_assert!((correlation(&flipped, &ys).unwrap() + r).abs() < 1e-9);
            prop_assert!((-1.0..=1.0).contains(&r));
        }
    }

    #[test]
    fn geodetic_round_trip(
        n in -10_000.0f64..10_000.0,
        e in -10_000.0f64..10_000.0,
        d in -1_000.0f64..1_000.0,
        // beyond 64 deg latitude or 128 deg longitude half an ulp of a degree exceeds 1e-9 m
        lat in -63.0f64..63.0,
        lon in -127.0f64..127.0,
    ) {
        let geo = GeoRef::new(lat, lon, 12.0).unwrap();
        let p = Vector3::new(n, e, d);
        let (la, lo, alt) = ned_to_geodetic(&p, &geo);
        let back = geodetic_to_ned(la, lo, alt, &geo);
        prop_assert!((back - p).amax() < 1e-9);
    }
}
