use std::fmt;
use std::str::FromStr;

use crate::config::KeyValues;
use crate::encoding::EncodingConfig;
use crate::error::{Error, Result};

/// How the rotation part of the head output is decoded.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RotationRepr {
    /// Two unnormalized columns, Gram–Schmidt.
    SixD,
    /// Full 3×3 matrix, SVD projection.
    NineD,
}

impl RotationRepr {
    pub fn dim(self) -> usize {
        match self {
            RotationRepr::SixD => 6,
            RotationRepr::NineD => 9,
        }
    }
}

impl fmt::Display for RotationRepr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RotationRepr::SixD => "6d",
            RotationRepr::NineD => "9d",
        })
    }
}

impl FromStr for RotationRepr {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "6d" => Ok(RotationRepr::SixD),
            "9d" => Ok(RotationRepr::NineD),
            _ => Err(Error::Parse(format!("unknown rotation representation {s:?}"))),
        }
    }
}

/// What each block group's residual re-injects.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReattentionMode {
    /// The fused positional encoding fed to the first block.
    EncodedInput,
    /// The group's own input.
    GroupInput,
}

impl fmt::Display for ReattentionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ReattentionMode::EncodedInput => "input",
            ReattentionMode::GroupInput => "group",
        })
    }
}

impl FromStr for ReattentionMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "input" => Ok(ReattentionMode::EncodedInput),
            "group" => Ok(ReattentionMode::GroupInput),
            _ => Err(Error::Parse(format!("unknown re-attention mode {s:?}"))),
        }
    }
}

/// Architecture of the pose regressor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RegressorConfig {
    pub d_model: usize,
    pub n_heads: usize,
    pub n_blocks: usize,
    pub group_size: usize,
    pub ffn_dim: usize,
    /// Frequency bands of the 3D coordinate embedding.
    pub bands: usize,
    pub enable_reattention: bool,
    pub enable_dynamic_pe: bool,
    pub rotation_repr: RotationRepr,
    pub reattention_mode: ReattentionMode,
    /// Only every `token_stride`-th cell in each direction becomes a token.
    pub token_stride: usize,
}

impl Default for RegressorConfig {
    fn default() -> Self {
        RegressorConfig {
            d_model: 32,
            n_heads: 4,
            n_blocks: 12,
            group_size: 4,
            ffn_dim: 64,
            bands: 5,
            enable_reattention: true,
            enable_dynamic_pe: true,
            rotation_repr: RotationRepr::SixD,
            reattention_mode: ReattentionMode::EncodedInput,
            token_stride: 1,
        }
    }
}

impl RegressorConfig {
    /// Large configuration matching the full-size model (`d_model = 256`, 8 heads).
    pub fn full_scale() -> Self {
        RegressorConfig {
            d_model: 256,
            n_heads: 8,
            ffn_dim: 512,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.encoding().validate()?;
        let bad = |m: String| Err(Error::Config(m));
        if self.n_heads == 0 || self.d_model % self.n_heads != 0 {
            return bad(format!("d_model {} not divisible by n_heads {}", self.d_model, self.n_heads));
        }
        if self.group_size == 0 || self.n_blocks == 0 || self.n_blocks % self.group_size != 0 {
            return bad(format!(
                "n_blocks {} not a positive multiple of group_size {}",
                self.n_blocks, self.group_size
            ));
        }
        if self.ffn_dim == 0 || self.token_stride == 0 {
            return bad("ffn_dim and token_stride must be positive".into());
        }
        Ok(())
    }

    pub fn encoding(&self) -> EncodingConfig {
        EncodingConfig {
            d_model: self.d_model,
            bands: self.bands,
        }
    }

    pub fn n_groups(&self) -> usize {
        self.n_blocks / self.group_size
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }

    /// Width of the raw pose vector: 4 homogeneous translation values plus the rotation block.
    pub fn pose_dim(&self) -> usize {
        4 + self.rotation_repr.dim()
    }

    /// Consumes the architecture keys from `kv`.
    pub fn from_kv(kv: &mut KeyValues) -> Result<Self> {
        let d = RegressorConfig::default();
        let d_model = kv.take("d_model", d.d_model)?;
        let cfg = RegressorConfig {
            d_model,
            n_heads: kv.take("n_heads", d.n_heads)?,
            n_blocks: kv.take("n_blocks", d.n_blocks)?,
            group_size: kv.take("group_size", d.group_size)?,
            ffn_dim: kv.take("ffn_dim", 2 * d_model)?,
            bands: kv.take("bands", d.bands)?,
            enable_reattention: kv.take_bool("enable_reattention", d.enable_reattention)?,
            enable_dynamic_pe: kv.take_bool("enable_dynamic_pe", d.enable_dynamic_pe)?,
            rotation_repr: kv.take("rotation_repr", d.rotation_repr)?,
            reattention_mode: kv.take("reattention_mode", d.reattention_mode)?,
            token_stride: kv.take("token_stride", d.token_stride)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_kv_string(&self) -> String {
        format!(
            "d_model={}\nn_heads={}\nn_blocks={}\ngroup_size={}\nffn_dim={}\nbands={}\n\
             enable_reattention={}\nenable_dynamic_pe={}\nrotation_repr={}\nreattention_mode={}\n\
             token_stride={}\n",
            self.d_model,
            self.n_heads,
            self.n_blocks,
            self.group_size,
            self.ffn_dim,
            self.bands,
            self.enable_reattention,
            self.enable_dynamic_pe,
            self.rotation_repr,
            self.reattention_mode,
            self.token_stride
        )
    }
}
