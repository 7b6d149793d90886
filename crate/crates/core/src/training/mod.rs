//! Pose losses, online augmentation, exact gradients, AdamW with a one-cycle
//! schedule, and the train / fine-tune loops.

mod augment;
mod loss;
mod optim;

pub use augment::{apply_scene_transform, augment, random_unit_vector, sample_jitter, AugmentConfig};
pub use loss::{pose_loss, pose_loss_grad, total_loss};
pub use optim::{adamw_step, one_cycle_lr, OptimConfig, OptimState};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::encoding::SceneCoordinateMap;
use crate::error::{Error, Result};
use crate::eval::median;
use crate::geometry::{pose_error, Intrinsics, Pose};
use crate::regressor::{
    backward, decode_pose, decode_pose_backward, forward_tokens, init_params, prepare_input,
    ModelParams, RegressorConfig,
};

/// One supervised frame.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainSample {
    pub scm: SceneCoordinateMap,
    pub k: Intrinsics,
    pub gt: Pose,
}

/// Loss, parameter gradient and final-head prediction for one sample.
pub struct SampleGradient {
    pub loss: f64,
    pub grads: Vec<f64>,
    pub prediction: Pose,
}

/// Exact gradient of the summed per-head L1 pose loss for one sample.
pub fn sample_gradient(params: &ModelParams, sample: &TrainSample) -> Result<SampleGradient> {
    let cfg = &params.config;
    let input = prepare_input(&sample.scm, &sample.k, cfg)?;
    let (raw, cache) = forward_tokens(params, &input, true, true);
    let cache = cache.expect("cache requested");
    let mut loss = 0.0;
    let mut d_outputs = Vec::with_capacity(raw.outputs.len());
    let mut prediction = Pose::identity();
    for out in &raw.outputs {
        let out = out.as_ref().expect("all heads evaluated in training");
        let pose = decode_pose(out, cfg.rotation_repr).map_err(|_| Error::NonFiniteLoss)?;
        let (l, gr, gt) = pose_loss_grad(&pose, &sample.gt);
        loss += l;
        d_outputs.push(Some(
            decode_pose_backward(out, cfg.rotation_repr, &gr, &gt).map_err(|_| Error::NonFiniteLoss)?,
        ));
        prediction = pose;
    }
    if !loss.is_finite() {
        return Err(Error::NonFiniteLoss);
    }
    let mut grads = vec![0.0; params.len()];
    backward(params, &cache, &d_outputs, &mut grads);
    Ok(SampleGradient {
        loss,
        grads,
        prediction,
    })
}

/// Mean loss over the batch and its gradient, reduced in sample order.
pub fn gradients(params: &ModelParams, batch: &[TrainSample]) -> Result<(f64, Vec<f64>)> {
    let (loss, grads, _) = batch_gradients(params, batch)?;
    Ok((loss, grads))
}

fn batch_gradients(params: &ModelParams, batch: &[TrainSample]) -> Result<(f64, Vec<f64>, Vec<Pose>)> {
    if batch.is_empty() {
        return Err(Error::Config("empty batch".into()));
    }
    let per_sample: Vec<Result<SampleGradient>> =
        batch.par_iter().map(|s| sample_gradient(params, s)).collect();
    let inv = 1.0 / batch.len() as f64;
    let mut grads = vec![0.0; params.len()];
    let mut loss = 0.0;
    let mut predictions = Vec::with_capacity(batch.len());
    for r in per_sample {
        let sg = r?;
        loss += sg.loss;
        for (g, s) in grads.iter_mut().zip(&sg.grads) {
            *g += s;
        }
        predictions.push(sg.prediction);
    }
    loss *= inv;
    grads.iter_mut().for_each(|g| *g *= inv);
    if !loss.is_finite() || grads.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFiniteLoss);
    }
    Ok((loss, grads, predictions))
}

/// One row of the training log.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub split: String,
    pub loss: f64,
    pub median_trans_m: f64,
    pub median_rot_deg: f64,
}

/// Result of a training run. When `aborted` is set, `params` holds the last
/// parameters that produced a finite loss.
pub struct TrainRun {
    pub params: ModelParams,
    pub log: Vec<EpochLog>,
    pub aborted: Option<Error>,
}

/// Mean summed-head loss and median errors of the final head, without augmentation.
pub fn validation_stats(params: &ModelParams, samples: &[TrainSample]) -> Result<(f64, f64, f64)> {
    let stats: Vec<Result<(f64, f64, f64)>> = samples
        .par_iter()
        .map(|s| {
            let input = prepare_input(&s.scm, &s.k, &params.config)?;
            let (raw, _) = forward_tokens(params, &input, true, false);
            let poses = raw
                .outputs
                .iter()
                .flatten()
                .map(|o| decode_pose(o, params.config.rotation_repr))
                .collect::<Result<Vec<_>>>()?;
            let e = pose_error(poses.last().expect("at least one head"), &s.gt);
            Ok((total_loss(&poses, &s.gt), e.trans_err, e.rot_err))
        })
        .collect();
    let stats = stats.into_iter().collect::<Result<Vec<_>>>()?;
    let loss = stats.iter().map(|s| s.0).sum::<f64>() / stats.len().max(1) as f64;
    let trans: Vec<f64> = stats.iter().map(|s| s.1).collect();
    let rot: Vec<f64> = stats.iter().map(|s| s.2).collect();
    Ok((loss, median(&trans), median(&rot)))
}

enum Schedule {
    OneCycle,
    Fixed(f64),
}

#[allow(clippy::too_many_arguments)]
fn run_epochs(
    mut params: ModelParams,
    train: &[TrainSample],
    val: &[TrainSample],
    optim: &OptimConfig,
    augment_cfg: &AugmentConfig,
    seed: u64,
    epochs: usize,
    schedule: Schedule,
) -> Result<TrainRun> {
    optim.validate()?;
    augment_cfg.validate()?;
    if train.is_empty() {
        return Err(Error::Config("no training samples".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_7a1e_u64);
    let mut state = OptimState::new(params.len());
    let steps_per_epoch = train.len().div_ceil(optim.batch_size);
    let total_steps = epochs * steps_per_epoch;
    let mut step = 0;
    let mut log = Vec::new();
    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 0..epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut trans = Vec::with_capacity(train.len());
        let mut rot = Vec::with_capacity(train.len());
        for chunk in order.chunks(optim.batch_size) {
            let batch: Vec<TrainSample> = chunk.iter().map(|&i| augment(&train[i], augment_cfg, &mut rng)).collect();
            let (loss, grads, preds) = match batch_gradients(&params, &batch) {
                Ok(r) => r,
                Err(e @ Error::NonFiniteLoss) => {
                    return Ok(TrainRun {
                        params,
                        log,
                        aborted: Some(e),
                    })
                }
                Err(e) => return Err(e),
            };
            let lr = match schedule {
                Schedule::OneCycle => one_cycle_lr(step, total_steps, optim),
                Schedule::Fixed(lr) => lr,
            };
            let mut next = params.data.clone();
            adamw_step(&mut next, &grads, &mut state, optim, lr);
            if next.iter().any(|x| !x.is_finite()) {
                return Ok(TrainRun {
                    params,
                    log,
                    aborted: Some(Error::NonFiniteLoss),
                });
            }
            params.data = next;
            params.round_to_f32();
            step += 1;
            epoch_loss += loss * batch.len() as f64;
            for (p, s) in preds.iter().zip(&batch) {
                let e = pose_error(p, &s.gt);
                trans.push(e.trans_err);
                rot.push(e.rot_err);
            }
        }
        log.push(EpochLog {
            epoch,
            split: "train".into(),
            loss: epoch_loss / train.len() as f64,
            median_trans_m: median(&trans),
            median_rot_deg: median(&rot),
        });
        if !val.is_empty() {
            let (loss, mt, mr) = validation_stats(&params, val)?;
            log.push(EpochLog {
                epoch,
                split: "val".into(),
                loss,
                median_trans_m: mt,
                median_rot_deg: mr,
            });
        }
    }
    Ok(TrainRun {
        params,
        log,
        aborted: None,
    })
}

/// Trains a freshly initialized regressor with the one-cycle schedule.
pub fn train_samples(
    train: &[TrainSample],
    val: &[TrainSample],
    config: &RegressorConfig,
    optim: &OptimConfig,
    augment_cfg: &AugmentConfig,
    seed: u64,
) -> Result<TrainRun> {
    let params = init_params(config, seed)?;
    run_epochs(params, train, val, optim, augment_cfg, seed, optim.epochs, Schedule::OneCycle)
}

/// Continues training `params` for exactly `epochs` passes at the fixed
/// fine-tuning learning rate with a fresh optimizer state.
pub fn finetune_samples(
    params: &ModelParams,
    samples: &[TrainSample],
    epochs: usize,
    optim: &OptimConfig,
    augment_cfg: &AugmentConfig,
    seed: u64,
) -> Result<TrainRun> {
    if epochs == 0 {
        return Ok(TrainRun {
            params: params.clone(),
            log: Vec::new(),
            aborted: None,
        });
    }
    run_epochs(
        params.clone(),
        samples,
        &[],
        optim,
        augment_cfg,
        seed,
        epochs,
        Schedule::Fixed(optim.finetune_rate()),
    )
}
