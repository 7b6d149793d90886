//! Relocalization metrics: per-frame pose errors, medians and threshold accuracies.

use rayon::prelude::*;

use crate::error::Result;
use crate::geometry::{pose_error, Pose, PoseError};
use crate::regressor::{forward, ModelParams};
use crate::training::TrainSample;

/// `(meters, degrees)` thresholds reported in every [`EvalReport`].
pub const ACCURACY_THRESHOLDS: [(f64, f64); 3] = [(0.05, 5.0), (0.10, 5.0), (0.50, 5.0)];

/// Middle order statistic for odd lengths, mean of the two middle values for
/// even lengths; NaN for an empty slice.
pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Fraction of frames within both thresholds.
pub fn accuracy(errors: &[PoseError], trans_m: f64, rot_deg: f64) -> f64 {
    if errors.is_empty() {
        return 0.0;
    }
    errors.iter().filter(|e| e.within(trans_m, rot_deg)).count() as f64 / errors.len() as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct Accuracy {
    pub trans_m: f64,
    pub rot_deg: f64,
    pub fraction: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub errors: Vec<PoseError>,
    pub median_trans: f64,
    pub median_rot: f64,
    pub accuracies: Vec<Accuracy>,
}

impl EvalReport {
    pub fn from_errors(errors: Vec<PoseError>) -> Self {
        let trans: Vec<f64> = errors.iter().map(|e| e.trans_err).collect();
        let rot: Vec<f64> = errors.iter().map(|e| e.rot_err).collect();
        let accuracies = ACCURACY_THRESHOLDS
            .iter()
            .map(|&(t, r)| Accuracy {
                trans_m: t,
                rot_deg: r,
                fraction: accuracy(&errors, t, r),
            })
            .collect();
        EvalReport {
            median_trans: median(&trans),
            median_rot: median(&rot),
            errors,
            accuracies,
        }
    }

    pub fn from_poses(predictions: &[Pose], truths: &[Pose]) -> Self {
        Self::from_errors(predictions.iter().zip(truths).map(|(p, t)| pose_error(p, t)).collect())
    }

    /// Accuracy at the given thresholds over this report's frames.
    pub fn accuracy_at(&self, trans_m: f64, rot_deg: f64) -> f64 {
        accuracy(&self.errors, trans_m, rot_deg)
    }
}

/// Final-head pose for every sample, in sample order.
pub fn predict(params: &ModelParams, samples: &[TrainSample]) -> Result<Vec<Pose>> {
    samples
        .par_iter()
        .map(|s| forward(&s.scm, &s.k, params, false).map(|o| o.pose))
        .collect()
}

pub fn evaluate_samples(params: &ModelParams, samples: &[TrainSample]) -> Result<EvalReport> {
    let preds = predict(params, samples)?;
    let truths: Vec<Pose> = samples.iter().map(|s| s.gt).collect();
    Ok(EvalReport::from_poses(&preds, &truths))
}
