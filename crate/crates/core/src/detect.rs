//! Streaming spoofing-detection statistics over the target filter's
//! innovations: per-axis test ratio, cumulative residual sums and the
//! measured/estimated correlation coefficient.

use std::collections::VecDeque;

use nalgebra::{DVector, Vector3};
use thiserror::Error;

use crate::ekf::{EkfError, Innovation, MeasurementMode};

/// Floor on the estimated speed when normalizing velocity innovations, m/s.
pub const VELOCITY_NORM_FLOOR: f64 = 0.1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DetectError {
    #[error("innovation covariance diagonal must be positive (t={t})")]
    NonPositiveVariance { t: f64 },
    #[error("correlation needs two equal-length series of at least 2 samples (got {0} and {1})")]
    BadSeries(usize, usize),
    #[error("correlation is undefined for a constant series")]
    UndefinedCorrelation,
}

impl From<EkfError> for DetectError {
    fn from(e: EkfError) -> Self {
        match e {
            EkfError::SingularInnovation { t } => Self::NonPositiveVariance { t },
            _ => Self::NonPositiveVariance { t: f64::NAN },
        }
    }
}

/// Per-axis `r_i^2 / (S_ii * G^2)`.
pub fn test_ratio(innov: &Innovation, gate: f64) -> Result<Vec<f64>, DetectError> {
    Ok(innov.test_ratios(gate)?)
}

/// Spoofing flag: some axis has a test ratio above one.
pub fn flagged(ratios: &[f64]) -> bool {
    ratios.iter().any(|tr| *tr > 1.0)
}

/// `||r_vel|| / max(||v_hat||, VELOCITY_NORM_FLOOR)`.
pub fn normalized_velocity_innovation(r_vel: &Vector3<f64>, v_hat: &Vector3<f64>) -> f64 {
    r_vel.norm() / v_hat.norm().max(VELOCITY_NORM_FLOOR)
}

/// Extracts the position or velocity block of a joint innovation.
pub fn innovation_block(innov: &Innovation, block: MeasurementMode) -> Option<Innovation> {
    let offset = match (innov.mode, block) {
        (a, b) if a == b => return Some(innov.clone()),
        (MeasurementMode::Both, MeasurementMode::Position) => 0,
        (MeasurementMode::Both, MeasurementMode::Velocity) => 3,
        _ => return None,
    };
    Some(Innovation {
        r: innov.r.rows(offset, 3).into_owned(),
        s: innov.s.view((offset, offset), (3, 3)).into_owned(),
        t: innov.t,
        mode: block,
    })
}

/// Pearson coefficient of two equal-length series.
pub fn correlation(measured: &[f64], estimated: &[f64]) -> Result<f64, DetectError> {
    let n = measured.len();
    if n != estimated.len() || n < 2 {
        return Err(DetectError::BadSeries(n, estimated.len()));
    }
    let constant = |xs: &[f64]| xs.iter().all(|x| *x == xs[0]);
    if constant(measured) || constant(estimated) {
        return Err(DetectError::UndefinedCorrelation);
    }
    let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
    let (um, ue) = (mean(measured), mean(estimated));
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (m, e) in measured.iter().zip(estimated) {
        let dm = m - um;
        let de = e - ue;
        sxy += dm * de;
        sxx += dm * dm;
        syy += de * de;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(DetectError::UndefinedCorrelation);
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Paired (measured, estimated) samples per channel, optionally bounded.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CorrelationWindow {
    horizon: Option<usize>,
    channels: Vec<(VecDeque<f64>, VecDeque<f64>)>,
}

impl CorrelationWindow {
    pub fn new(channels: usize, horizon: Option<usize>) -> Self {
        Self {
            horizon,
            channels: vec![(VecDeque::new(), VecDeque::new()); channels],
        }
    }

    pub fn push(&mut self, measured: &[f64], estimated: &[f64]) {
        debug_assert_eq!(measured.len(), self.channels.len());
        for ((ms, es), (m, e)) in self.channels.iter_mut().zip(measured.iter().zip(estimated)) {
            ms.push_back(*m);
            es.push_back(*e);
            if let Some(h) = self.horizon {
                while ms.len() > h {
                    ms.pop_front();
                    es.pop_front();
                }
            }
        }
    }

    pub fn len(&self) -> usize {
        self.channels.first().map_or(0, |c| c.0.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn correlation(&self, channel: usize) -> Result<f64, DetectError> {
        let (ms, es) = &self.channels[channel];
        let (ms, es): (Vec<f64>, Vec<f64>) =
            (ms.iter().copied().collect(), es.iter().copied().collect());
        correlation(&ms, &es)
    }
}

/// Running detector over one measurement block.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectorState {
    /// Signed per-axis sum of residuals.
    pub cusum: DVector<f64>,
    /// Sum of residual 2-norms; never decreases.
    pub norm_cusum: f64,
    pub last_test_ratio: Vec<f64>,
    pub updates: u64,
    pub corr_window: CorrelationWindow,
}

impl DetectorState {
    pub fn new(dim: usize, horizon: Option<usize>) -> Self {
        Self {
            cusum: DVector::zeros(dim),
            norm_cusum: 0.0,
            last_test_ratio: vec![0.0; dim],
            updates: 0,
            corr_window: CorrelationWindow::new(dim, horizon),
        }
    }

    /// Evaluates one innovation: test ratio and both cumulative sums.
    pub fn observe(&mut self, innov: &Innovation, gate: f64) -> Result<(), DetectError> {
        self.last_test_ratio = test_ratio(innov, gate)?;
        cusum_update(self, innov);
        Ok(())
    }
}

/// Adds one residual to the signed and norm accumulators.
pub fn cusum_update(state: &mut DetectorState, innov: &Innovation) {
    state.cusum += &innov.r;
    state.norm_cusum += innov.r.norm();
    state.updates += 1;
}
