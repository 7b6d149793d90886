#![allow(dead_code)]

use marepo::encoding::SceneCoordinateMap;
use marepo::geometry::{axis_angle, cell_ray, Intrinsics, Pose};
use marepo::regressor::{init_params, ModelParams, RegressorConfig};
use marepo::training::TrainSample;
use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn tiny_config() -> RegressorConfig {
    RegressorConfig {
        d_model: 16,
        n_heads: 2,
        n_blocks: 4,
        group_size: 2,
        ffn_dim: 32,
        bands: 3,
        ..Default::default()
    }
}

/// Parameters with every tensor randomized, including the pose heads' last
/// layers, so gradients flow everywhere.
pub fn random_params(cfg: &RegressorConfig, seed: u64) -> ModelParams {
    let mut p = init_params(cfg, seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 1000);
    for t in p.layout.tensors.clone() {
        let scale = if t.name.contains("mlp.2") { 0.2 } else { 0.1 };
        for x in &mut p.data[t.range()] {
            *x += rng.gen_range(-scale..scale);
        }
    }
    p
}

pub fn random_pose(rng: &mut ChaCha8Rng) -> Pose {
    let axis = Vector3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
    Pose::new(
        axis_angle(&axis, rng.gen_range(0.0..3.0)),
        Vector3::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)),
    )
}

/// Geometrically consistent sample: every valid cell holds the scene point
/// seen along its ray at a random depth.
pub fn random_sample(h: usize, w: usize, rng: &mut ChaCha8Rng) -> TrainSample {
    let f = rng.gen_range(0.8..1.6) * w as f64;
    let k = Intrinsics::new(f, f * rng.gen_range(0.9..1.1), w as f64 / 2.0, h as f64 / 2.0).unwrap();
    let gt = random_pose(rng);
    let mut scm = SceneCoordinateMap::new(h, w);
    for v in 0..h {
        for u in 0..w {
            if rng.gen_bool(0.8) {
                let depth = rng.gen_range(1.0..4.0);
                scm.set(u, v, Some(gt.transform_point(&(cell_ray(&k, u as f64, v as f64) * depth))));
            }
        }
    }
    if scm.n_valid() == 0 {
        scm.set(0, 0, Some(gt.transform_point(&Vector3::new(0.0, 0.0, 2.0))));
    }
    TrainSample { scm, k, gt }
}
