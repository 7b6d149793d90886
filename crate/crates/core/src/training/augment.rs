use nalgebra::Vector3;
use rand::Rng;

use super::TrainSample;
use crate::config::KeyValues;
use crate::error::{Error, Result};
use crate::geometry::{axis_angle, Pose};

/// Online rigid jitter applied to a whole frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentConfig {
    /// Max per-axis translation, meters.
    pub jitter_trans: f64,
    /// Max rotation angle, degrees.
    pub jitter_rot: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            jitter_trans: 1.0,
            jitter_rot: 180.0,
        }
    }
}

impl AugmentConfig {
    pub fn none() -> Self {
        AugmentConfig {
            jitter_trans: 0.0,
            jitter_rot: 0.0,
        }
    }

    pub fn from_kv(kv: &mut KeyValues) -> Result<Self> {
        let d = AugmentConfig::default();
        let cfg = AugmentConfig {
            jitter_trans: kv.take("jitter_trans", d.jitter_trans)?,
            jitter_rot: kv.take("jitter_rot", d.jitter_rot)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.jitter_trans >= 0.0 && self.jitter_rot >= 0.0) {
            return Err(Error::Config("augmentation ranges must be non-negative".into()));
        }
        Ok(())
    }
}

/// Uniform direction on the unit sphere.
pub fn random_unit_vector<R: Rng + ?Sized>(rng: &mut R) -> Vector3<f64> {
    let z: f64 = rng.gen_range(-1.0..=1.0);
    let phi: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    let r = (1.0 - z * z).max(0.0).sqrt();
    Vector3::new(r * phi.cos(), r * phi.sin(), z)
}

/// Draws the rigid scene transform used by [`augment`].
pub fn sample_jitter<R: Rng + ?Sized>(cfg: &AugmentConfig, rng: &mut R) -> Pose {
    let axis = random_unit_vector(rng);
    let angle = if cfg.jitter_rot > 0.0 {
        rng.gen_range(0.0..=cfg.jitter_rot).to_radians()
    } else {
        0.0
    };
    let mut t = Vector3::zeros();
    if cfg.jitter_trans > 0.0 {
        for c in t.iter_mut() {
            *c = rng.gen_range(-cfg.jitter_trans..=cfg.jitter_trans);
        }
    }
    Pose::new(axis_angle(&axis, angle), t)
}

/// Moves every scene coordinate and the ground-truth pose by `transform`.
pub fn apply_scene_transform(sample: &TrainSample, transform: &Pose) -> TrainSample {
    let mut out = sample.clone();
    for i in 0..out.scm.h * out.scm.w {
        if out.scm.mask[i] {
            let p = transform.transform_point(&out.scm.point_at(i));
            out.scm.coords[3 * i..3 * i + 3].copy_from_slice(p.as_slice());
        }
    }
    out.gt = transform.compose(&sample.gt);
    out
}

/// Frame-wise rigid jitter: one random transform moves all scene coordinates
/// and the ground truth together, so 2D–3D–pose consistency is preserved.
pub fn augment<R: Rng + ?Sized>(sample: &TrainSample, cfg: &AugmentConfig, rng: &mut R) -> TrainSample {
    if cfg.jitter_trans == 0.0 && cfg.jitter_rot == 0.0 {
        return sample.clone();
    }
    apply_scene_transform(sample, &sample_jitter(cfg, rng))
}
