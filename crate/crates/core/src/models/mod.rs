//! MLP encoder/decoder, the two training objectives and the alternating training loop.

mod loss;
mod net;
mod train;

pub use loss::{
    vqvae_loss, vqvae_loss_on_tape, vqwae_loss, vqwae_loss_on_tape, LossBreakdown, LossNodes,
    LossWeights, Model, ParamGroup, ParamIds,
};
pub use net::{EncoderDecoder, Mlp};
pub use train::{
    evaluate, CodebookInit, EvalMetrics, Method, ModelConfig, TrainSettings, TrainState,
    CHECKPOINT_FORMAT, CHECKPOINT_VERSION,
};
