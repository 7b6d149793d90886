//! Flat parameter storage with a named tensor layout.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{RegressorConfig, RotationRepr};
use crate::error::{Error, Result};
use crate::tensor::{Linear, LinearGrad};

/// Name, shape and offset of one tensor inside the flat buffer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TensorInfo {
    pub name: String,
    pub dims: Vec<usize>,
    pub offset: usize,
}

impl TensorInfo {
    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// Weight and bias offsets of a linear layer.
#[derive(Debug, Clone, Copy)]
pub struct LinearSlot {
    pub w: usize,
    pub b: Option<usize>,
    pub d_in: usize,
    pub d_out: usize,
}

impl LinearSlot {
    pub fn view<'a>(&self, data: &'a [f64]) -> Linear<'a> {
        Linear {
            w: &data[self.w..self.w + self.d_in * self.d_out],
            b: self.b.map(|b| &data[b..b + self.d_out]),
            d_in: self.d_in,
            d_out: self.d_out,
        }
    }

    /// Splits `grads` into this layer's weight and bias gradient slices.
    pub fn grad<'a>(&self, grads: &'a mut [f64]) -> LinearGrad<'a> {
        let n = self.d_in * self.d_out;
        match self.b {
            // biases are laid out directly after the weights
            Some(b) => {
                debug_assert_eq!(b, self.w + n);
                let (w, rest) = grads[self.w..].split_at_mut(n);
                LinearGrad {
                    w,
                    b: Some(&mut rest[..self.d_out]),
                }
            }
            None => LinearGrad {
                w: &mut grads[self.w..self.w + n],
                b: None,
            },
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct NormSlot {
    pub gain: usize,
    pub bias: usize,
    pub d: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct BlockSlots {
    pub ln1: NormSlot,
    pub wq: LinearSlot,
    pub wk: LinearSlot,
    pub wv: LinearSlot,
    pub wo: LinearSlot,
    pub ln2: NormSlot,
    pub ffn1: LinearSlot,
    pub ffn2: LinearSlot,
}

#[derive(Debug, Clone, Copy)]
pub struct HeadSlots {
    pub conv: [LinearSlot; 3],
    pub mlp: [LinearSlot; 3],
}

/// Offsets of every tensor of a [`RegressorConfig`], in serialization order.
#[derive(Debug, Clone)]
pub struct ParamLayout {
    pub tensors: Vec<TensorInfo>,
    pub pe3d: LinearSlot,
    pub blocks: Vec<BlockSlots>,
    pub heads: Vec<HeadSlots>,
    pub total: usize,
}

struct LayoutBuilder {
    tensors: Vec<TensorInfo>,
    total: usize,
}

impl LayoutBuilder {
    fn push(&mut self, name: String, dims: Vec<usize>) -> usize {
        let offset = self.total;
        let info = TensorInfo { name, dims, offset };
        self.total += info.len();
        self.tensors.push(info);
        offset
    }

    fn linear(&mut self, prefix: &str, d_in: usize, d_out: usize, bias: bool) -> LinearSlot {
        let w = self.push(format!("{prefix}.weight"), vec![d_in, d_out]);
        let b = bias.then(|| self.push(format!("{prefix}.bias"), vec![d_out]));
        LinearSlot { w, b, d_in, d_out }
    }

    fn norm(&mut self, prefix: &str, d: usize) -> NormSlot {
        NormSlot {
            gain: self.push(format!("{prefix}.gain"), vec![d]),
            bias: self.push(format!("{prefix}.bias"), vec![d]),
            d,
        }
    }
}

impl ParamLayout {
    pub fn new(cfg: &RegressorConfig) -> Self {
        let d = cfg.d_model;
        let mut b = LayoutBuilder {
            tensors: Vec::new(),
            total: 0,
        };
        let pe3d = b.linear("pe3d", cfg.encoding().raw3d_dim(), d, true);
        let blocks = (0..cfg.n_blocks)
            .map(|i| {
                let p = format!("blocks.{i}");
                BlockSlots {
                    ln1: b.norm(&format!("{p}.ln1"), d),
                    wq: b.linear(&format!("{p}.attn.q"), d, d, false),
                    wk: b.linear(&format!("{p}.attn.k"), d, d, false),
                    wv: b.linear(&format!("{p}.attn.v"), d, d, false),
                    wo: b.linear(&format!("{p}.attn.out"), d, d, true),
                    ln2: b.norm(&format!("{p}.ln2"), d),
                    ffn1: b.linear(&format!("{p}.ffn.0"), d, cfg.ffn_dim, true),
                    ffn2: b.linear(&format!("{p}.ffn.1"), cfg.ffn_dim, d, true),
                }
            })
            .collect();
        let heads = (0..cfg.n_groups())
            .map(|i| {
                let p = format!("heads.{i}");
                HeadSlots {
                    conv: [0, 1, 2].map(|j| b.linear(&format!("{p}.conv.{j}"), d, d, true)),
                    mlp: [
                        b.linear(&format!("{p}.mlp.0"), d, d, true),
                        b.linear(&format!("{p}.mlp.1"), d, d, true),
                        b.linear(&format!("{p}.mlp.2"), d, cfg.pose_dim(), true),
                    ],
                }
            })
            .collect();
        ParamLayout {
            total: b.total,
            tensors: b.tensors,
            pe3d,
            blocks,
            heads,
        }
    }
}

/// All learnable weights of the regressor.
#[derive(Debug, Clone)]
pub struct ModelParams {
    pub config: RegressorConfig,
    pub layout: ParamLayout,
    pub data: Vec<f64>,
}

impl PartialEq for ModelParams {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config && self.data == other.data
    }
}

/// `softplus⁻¹(1)`: the homogeneous weight that decodes to scale one.
pub fn unit_homogeneous_weight() -> f64 {
    (std::f64::consts::E - 1.0).ln()
}

/// Pose-head bias decoding to the identity pose with zero translation.
pub fn identity_pose_bias(repr: RotationRepr) -> Vec<f64> {
    let mut b = vec![0.0, 0.0, 0.0, unit_homogeneous_weight()];
    match repr {
        RotationRepr::SixD => b.extend([1.0, 0.0, 0.0, 0.0, 1.0, 0.0]),
        RotationRepr::NineD => b.extend([1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]),
    }
    b
}

impl ModelParams {
    pub fn zeros(config: RegressorConfig) -> Result<Self> {
        config.validate()?;
        let layout = ParamLayout::new(&config);
        let data = vec![0.0; layout.total];
        Ok(ModelParams {
            config,
            layout,
            data,
        })
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn info(&self, name: &str) -> Result<&TensorInfo> {
        self.layout
            .tensors
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| Error::ShapeMismatch(format!("no tensor named {name}")))
    }

    pub fn tensor(&self, name: &str) -> Result<&[f64]> {
        let r = self.info(name)?.range();
        Ok(&self.data[r])
    }

    pub fn tensor_mut(&mut self, name: &str) -> Result<&mut [f64]> {
        let r = self.info(name)?.range();
        Ok(&mut self.data[r])
    }

    /// Rounds every value to the nearest `f32`, the checkpoint precision.
    pub fn round_to_f32(&mut self) {
        for x in &mut self.data {
            *x = *x as f32 as f64;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

/// Deterministic initialization: fan-in scaled uniform weights, zero biases,
/// unit norm gains, and pose heads whose last layer outputs the identity pose.
pub fn init_params(config: &RegressorConfig, seed: u64) -> Result<ModelParams> {
    let mut params = ModelParams::zeros(*config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layout = params.layout.clone();
    for t in &layout.tensors {
        let slice = &mut params.data[t.range()];
        if t.name.ends_with(".gain") {
            slice.fill(1.0);
        } else if t.name.ends_with(".weight") {
            let bound = 1.0 / (t.dims[0] as f64).sqrt();
            for x in slice.iter_mut() {
                *x = rng.gen_range(-bound..bound);
            }
        }
    }
    let bias = identity_pose_bias(config.rotation_repr);
    for head in &layout.heads {
        let last = head.mlp[2];
        params.data[last.w..last.w + last.d_in * last.d_out].fill(0.0);
        let b = last.b.expect("pose head output has a bias");
        params.data[b..b + last.d_out].copy_from_slice(&bias);
    }
    params.round_to_f32();
    Ok(params)
}
