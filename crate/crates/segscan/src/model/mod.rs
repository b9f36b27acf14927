//! The full network: configuration, encoder blocks and stages, decoder, and
//! cost accounting.

mod block;
mod checkpoint;
mod config;
mod decoder;
mod encoder;
mod flops;
mod net;

pub use block::MixerBlock;
pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use config::{heads_for, MixerKind, ModelConfig};
pub use decoder::{Aggregate, Aggregator, ConvBnRelu, Decoder, FusionHead, MultiScaleContext};
pub use encoder::{Encoder, FeaturePyramid};
pub use flops::{
    count_encoder_params, count_flops, count_model_params, global_attention_flops, natten_flops,
    scan_flops, FlopsModel,
};
pub use net::SegModel;
