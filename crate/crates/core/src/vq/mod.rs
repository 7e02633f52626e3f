//! The discrete bottleneck: codebook, quantizer and usage metrics.

mod codebook;
mod metrics;
mod quantize;

pub use codebook::{
    kl_to_uniform, kl_to_uniform_from_logits, kl_to_uniform_on_tape, pi_from_beta, pi_on_tape,
    Codebook,
};
pub use metrics::{perplexity, usage_histogram, UsageStats};
pub use quantize::{
    nearest_codewords, quantize, quantize_on_tape, vqvae_codebook_terms, QuantizeResult,
    TapeQuantized,
};
