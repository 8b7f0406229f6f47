use serde::{Deserialize, Serialize};

use crate::detect::{correlation, DetectError};

use super::run::EpochRow;
use super::HarnessError;

/// Per-run statistics. Correlations are `None` where undefined (a constant series).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub epochs: usize,
    pub attack_epochs: usize,
    pub max_test_ratio: f64,
    pub mean_test_ratio: f64,
    pub max_pos_test_ratio: f64,
    pub max_vel_test_ratio: Option<f64>,
    pub flagged_epochs: usize,
    pub final_cusum: [Option<f64>; 6],
    pub final_norm_cusum: f64,
    pub rho_pos: [Option<f64>; 3],
    pub rho_vel: [Option<f64>; 3],
    /// Position correlation on the axis where the estimate moves the most.
    pub rho: Option<f64>,
    /// Velocity correlation on the axis where the estimated velocity varies the most.
    pub rho_velocity: Option<f64>,
    pub mean_vel_innov_norm: Option<f64>,
}

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

fn max_of(xs: impl Iterator<Item = f64>) -> f64 {
    xs.fold(f64::NAN, f64::max)
}

fn variance(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n
}

/// Axis (0..3) with the largest sample variance among finite series.
pub fn dominant_axis(series: &[Vec<f64>; 3]) -> Option<usize> {
    (0..3)
        .filter(|&i| series[i].len() >= 2 && series[i].iter().all(|x| x.is_finite()))
        .map(|i| (i, variance(&series[i])))
        .filter(|(_, v)| v.is_finite())
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(i, _)| i)
}

fn rho(measured: &[f64], estimated: &[f64]) -> Result<Option<f64>, HarnessError> {
    if measured.iter().chain(estimated).any(|x| !x.is_finite()) {
        return Ok(None);
    }
    match correlation(measured, estimated) {
        Ok(r) => Ok(Some(r)),
        Err(DetectError::UndefinedCorrelation) | Err(DetectError::BadSeries(..)) => Ok(None),
        Err(e) => Err(HarnessError::Config(e.to_string())),
    }
}

/// Summary statistics from the per-epoch rows alone.
///
/// Correlations and the normalized velocity innovation cover the attack
/// window (the whole run when there was no attack), trimmed to the trailing
/// `horizon` epochs if given. Correlations pair the received fix with the
/// target's predicted state at the same epoch.
pub fn compute_metrics(rows: &[EpochRow], horizon: Option<usize>) -> Result<Summary, HarnessError> {
    let Some(last) = rows.last() else {
        return Err(HarnessError::Config("cannot summarize an empty log".into()));
    };
    let attack: Vec<&EpochRow> = rows.iter().filter(|r| r.attack_active).collect();
    let mut window: Vec<&EpochRow> = if attack.is_empty() {
        rows.iter().collect()
    } else {
        attack.clone()
    };
    if let Some(h) = horizon {
        let skip = window.len().saturating_sub(h);
        window.drain(..skip);
    }

    let per_row: Vec<f64> = rows.iter().map(EpochRow::max_test_ratio).collect();
    let mean_test_ratio = per_row.iter().sum::<f64>() / per_row.len() as f64;
    let max_vel = max_of(rows.iter().flat_map(|r| r.test_ratio[3..].iter().copied()));

    let column =
        |f: &dyn Fn(&EpochRow) -> f64| -> Vec<f64> { window.iter().map(|r| f(r)).collect() };
    let mut rho_pos = [None; 3];
    let mut rho_vel = [None; 3];
    let mut est_pos: [Vec<f64>; 3] = Default::default();
    let mut est_vel: [Vec<f64>; 3] = Default::default();
    for i in 0..3 {
        est_pos[i] = column(&|r| r.prior_pos[i]);
        est_vel[i] = column(&|r| r.prior_vel[i]);
        rho_pos[i] = rho(&column(&|r| r.z_pos[i]), &est_pos[i])?;
        rho_vel[i] = rho(&column(&|r| r.z_vel[i]), &est_vel[i])?;
    }
    let vel_norms: Vec<f64> = window
        .iter()
        .map(|r| r.vel_innov_norm)
        .filter(|x| x.is_finite())
        .collect();

    Ok(Summary {
        epochs: rows.len(),
        attack_epochs: attack.len(),
        max_test_ratio: max_of(per_row.iter().copied()),
        mean_test_ratio,
        max_pos_test_ratio: max_of(rows.iter().flat_map(|r| r.test_ratio[..3].iter().copied())),
        max_vel_test_ratio: finite(max_vel),
        flagged_epochs: per_row.iter().filter(|x| **x > 1.0).count(),
        final_cusum: last.cusum.map(finite),
        final_norm_cusum: last.cusum_norm,
        rho_pos,
        rho_vel,
        rho: dominant_axis(&est_pos).and_then(|i| rho_pos[i]),
        rho_velocity: dominant_axis(&est_vel).and_then(|i| rho_vel[i]),
        mean_vel_innov_norm: (!vel_norms.is_empty())
            .then(|| vel_norms.iter().sum::<f64>() / vel_norms.len() as f64),
    })
}
