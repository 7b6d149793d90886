//! The map-relative pose regressor: fused positional encoding, a stack of
//! linear-attention transformer blocks grouped with re-attention residuals,
//! and one pose head per group.

mod checkpoint;
mod config;
mod model;
mod params;

pub use checkpoint::{
    checkpoint_from_bytes, checkpoint_to_bytes, load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC,
    CHECKPOINT_VERSION,
};
pub use config::{ReattentionMode, RegressorConfig, RotationRepr};
pub use model::{
    backward, block_backward, block_forward, decode_pose, decode_pose_backward, forward,
    forward_tokens, head_backward, head_forward, linear_attention, multihead_linear_attention,
    multihead_linear_attention_backward, pose_head, prepare_input, reattention_stack,
    transformer_block, ForwardCache, PoseVector, RawOutputs, RegressorOutput, TokenInput,
};
pub use params::{
    identity_pose_bias, init_params, unit_homogeneous_weight, BlockSlots, HeadSlots, LinearSlot,
    ModelParams, NormSlot, ParamLayout, TensorInfo,
};
