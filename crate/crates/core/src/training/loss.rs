use nalgebra::{Matrix3, Vector3};

use crate::geometry::Pose;

/// L1 subgradient with `sign(0) = 0`.
#[inline]
fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// `‖R̂ − R‖₁ + ‖t̂ − t‖₁` with entrywise absolute sums.
pub fn pose_loss(estimate: &Pose, truth: &Pose) -> f64 {
    (estimate.rotation - truth.rotation).abs().sum() + (estimate.translation - truth.translation).abs().sum()
}

/// [`pose_loss`] and its subgradient with respect to `R̂` and `t̂`.
pub fn pose_loss_grad(estimate: &Pose, truth: &Pose) -> (f64, Matrix3<f64>, Vector3<f64>) {
    let dr = estimate.rotation - truth.rotation;
    let dt = estimate.translation - truth.translation;
    (
        dr.abs().sum() + dt.abs().sum(),
        dr.map(sign),
        dt.map(sign),
    )
}

/// Sum of [`pose_loss`] over every head's prediction against the same truth.
pub fn total_loss(predictions: &[Pose], truth: &Pose) -> f64 {
    predictions.iter().map(|p| pose_loss(p, truth)).sum()
}
