//! The multi-stage network: an acausal TCN and sparse-attention encoder
//! followed by causal TCN decoders, each stage emitting per-frame action
//! logits and boundary scores at the input's frame rate.

mod checkpoint;
mod config;
mod cost;
mod model;
mod params;

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, Checkpoint,
    STATE_PREFIX,
};
pub use config::{receptive_field, ModelConfig};
pub use cost::{count_params_flops, CostReport};
pub use model::{
    decoder_forward, encoder_forward, tcn_block_forward, upsample_to_original, ForwardPass,
    MaskPlan, Model, ModelOutput, StagePrediction,
};
pub use params::{init_params, param_count, param_specs, Init, ParamSpec};
