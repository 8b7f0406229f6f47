//! Twin-system GPS/IMU spoofing workbench: a target EKF with spoofing
//! detectors and a co-moving attacker that reconstructs the target's
//! estimate from its own sensors.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod attack;
pub mod detect;
pub mod ekf;
pub mod harness;
pub mod sensors;
pub mod simcore;
pub mod wirecodec;
