use serde::{Deserialize, Serialize};

use crate::attack::Strategy;

use super::config::ScenarioConfig;
use super::metrics::Summary;
use super::run::{run_scenario, RunLog};
use super::HarnessError;

/// Runs independent scenarios one after another.
pub fn run_batch_sequential(configs: &[ScenarioConfig]) -> Vec<Result<RunLog, HarnessError>> {
    configs.iter().map(run_scenario).collect()
}

/// Runs independent scenarios, in parallel when the `parallel` feature is on.
/// Output order always matches input order.
pub fn run_batch(configs: &[ScenarioConfig]) -> Vec<Result<RunLog, HarnessError>> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        configs.par_iter().map(run_scenario).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        run_batch_sequential(configs)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteRow {
    pub name: String,
    pub strategy: Option<Strategy>,
    pub max_test_ratio: f64,
    pub final_norm_cusum: f64,
    pub rho: Option<f64>,
    pub summary: Summary,
}

fn shares_world(a: &ScenarioConfig, b: &ScenarioConfig) -> bool {
    a.trajectory == b.trajectory
        && a.sensors == b.sensors
        && a.ekf == b.ekf
        && a.duration == b.duration
        && a.dt_imu == b.dt_imu
        && a.dt_gps == b.dt_gps
        && a.fusion == b.fusion
        && a.gating == b.gating
}

/// Cross-strategy comparison. Every config must share trajectory, sensors and
/// filter settings with the first; rows follow config order.
pub fn run_suite(configs: &[ScenarioConfig]) -> Result<Vec<SuiteRow>, HarnessError> {
    Ok(run_suite_logs(configs)?
        .into_iter()
        .map(|(_, row)| row)
        .collect())
}

/// Like [`run_suite`], keeping each run's full log next to its table row.
pub fn run_suite_logs(configs: &[ScenarioConfig]) -> Result<Vec<(RunLog, SuiteRow)>, HarnessError> {
    if let Some(first) = configs.first() {
        if let Some(odd) = configs.iter().find(|c| !shares_world(first, c)) {
            return Err(HarnessError::Config(format!(
                "suite member '{}' does not share trajectory, seeds and filter settings with '{}'",
                odd.name, first.name
            )));
        }
    }
    run_batch(configs)
        .into_iter()
        .map(|log| {
            let log = log?;
            let row = SuiteRow {
                name: log.name.clone(),
                strategy: log.strategy,
                max_test_ratio: log.summary.max_test_ratio,
                final_norm_cusum: log.summary.final_norm_cusum,
                rho: log.summary.rho,
                summary: log.summary.clone(),
            };
            Ok((log, row))
        })
        .collect()
}
