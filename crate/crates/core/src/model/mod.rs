//! Horizon-conditioned transformer encoder classifier.
//!
//! Tokens are projected to the hidden width, offset by a learnable position
//! table (zero-initialized) and an affine age encoding, passed through
//! post-norm encoder layers with masked multi-head self-attention, averaged
//! over valid tokens, and classified into CN / MCI / AD with a softmax head.
//! Gradients are computed by hand in reverse mode from a [`ForwardTrace`].

mod backward;
pub mod checkpoint;
mod config;
mod forward;
mod params;

pub use backward::{backward, softmax_backward};
pub use config::{ClassifierShape, ModelConfig};
pub use forward::{
    classify, embed_sequence, encoder_layer_forward, forward, sequence_pool, softmax_rows, ForwardTrace, Mode,
};
pub use params::{init_params, EncoderLayerParams, LayerNorm, Linear, ModelParams};

pub const N_CLASSES: usize = 3;
pub const LAYER_NORM_EPS: f64 = 1e-5;
