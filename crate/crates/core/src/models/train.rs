use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::{vqvae_loss_on_tape, vqwae_loss_on_tape, LossBreakdown, LossWeights, Model};
use super::net::EncoderDecoder;
use crate::data::{BatchSampler, Dataset};
use crate::diffcore::{AdamState, Tape, Tensor};
use crate::ot::{DualAscent, DualPotentials};
use crate::vq::{quantize, usage_histogram, Codebook, UsageStats};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Vqvae,
    Vqwae,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Vqvae => "vqvae",
            Method::Vqwae => "vqwae",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CodebookInit {
    /// `U[−1/K, 1/K]`.
    Uniform,
    /// Encoded latents of the first training batch.
    Data,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub hidden: Vec<usize>,
    pub components: usize,
    pub latent_dim: usize,
    pub codebook_size: usize,
    pub codebook_init: CodebookInit,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainSettings {
    pub method: Method,
    pub batch_size: usize,
    pub lr: f64,
    pub phi_lr: f64,
    pub phi_iters: usize,
    pub weights: LossWeights,
}

/// Everything needed to resume training bit for bit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainState {
    pub model: Model,
    pub phis: DualPotentials,
    /// Optimizer of the minimization group (networks, atoms, logits).
    pub adam: AdamState,
    /// Optimizer of the potentials.
    pub dual: DualAscent,
    pub sampler: BatchSampler,
    pub iteration: u64,
    pub settings: TrainSettings,
    pub seed: u64,
}

impl TrainState {
    pub fn new(
        cfg: &ModelConfig,
        settings: TrainSettings,
        dataset: &Dataset,
        seed: u64,
    ) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = EncoderDecoder::init(
            dataset.n_x(),
            &cfg.hidden,
            cfg.components,
            cfg.latent_dim,
            &mut rng,
        );
        let sampler = BatchSampler::new(dataset, settings.batch_size, seed.wrapping_add(1))?;
        let codebook = match cfg.codebook_init {
            CodebookInit::Uniform => {
                Codebook::init_uniform(cfg.codebook_size, cfg.components, cfg.latent_dim, &mut rng)
            }
            CodebookInit::Data => {
                let first = sampler.clone().next_batch(dataset)?;
                let z = net.encode(&first)?;
                Codebook::init_from_latents(&z, cfg.codebook_size, cfg.components, &mut rng)?
            }
        };
        Ok(Self {
            model: Model::new(net, codebook)?,
            phis: DualPotentials::zeros(cfg.components, cfg.codebook_size),
            adam: AdamState::new(settings.lr),
            dual: DualAscent::new(settings.phi_lr, settings.weights.eps),
            sampler,
            iteration: 0,
            settings,
            seed,
        })
    }

    /// Draws the next batch and trains on it.
    pub fn step(&mut self, dataset: &Dataset) -> Result<LossBreakdown> {
        let x = self.sampler.next_batch(dataset)?;
        self.train_step(&x)
    }

    /// One iteration on batch `x`. VQ-WAE first ascends the potentials for `phi_iters` steps
    /// at the current latents, then takes one descent step with the potentials held fixed.
    pub fn train_step(&mut self, x: &Tensor) -> Result<LossBreakdown> {
        self.train_step_with_indices(x).map(|(loss, _)| loss)
    }

    /// [`TrainState::train_step`], also returning the row-major `B×M` codeword indices chosen
    /// in the forward pass.
    pub fn train_step_with_indices(&mut self, x: &Tensor) -> Result<(LossBreakdown, Vec<usize>)> {
        let iteration = self.iteration;
        self.try_step(x).map_err(|e| match e {
            Error::NonFinite(what) => Error::Numeric {
                iteration,
                detail: format!("non-finite value in {what}"),
            },
            other => other,
        })
    }

    fn try_step(&mut self, x: &Tensor) -> Result<(LossBreakdown, Vec<usize>)> {
        let s = &self.settings;
        if s.method == Method::Vqwae && s.phi_iters > 0 {
            let z = self.model.net.encode(x)?;
            let pi = self.model.codebook.pi();
            self.dual.run(
                &z,
                &self.model.codebook.atoms,
                &pi,
                &mut self.phis,
                s.phi_iters,
            )?;
        }
        let mut tape = Tape::new();
        let ids = self.model.leaves(&mut tape)?;
        let xn = tape.constant(x.clone())?;
        let nodes = match s.method {
            Method::Vqvae => vqvae_loss_on_tape(&mut tape, &ids, xn, &s.weights)?,
            Method::Vqwae => vqwae_loss_on_tape(&mut tape, &ids, xn, &self.phis, &s.weights)?,
        };
        let breakdown = nodes.breakdown(&tape)?;
        let grads = tape.backward(nodes.total)?.collect(&ids.all())?;
        if grads.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite("gradients"));
        }
        self.adam.step(self.model.params_mut(), &grads)?;
        self.iteration += 1;
        Ok((breakdown, nodes.indices))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let ck = CheckpointRef {
            format: CHECKPOINT_FORMAT,
            version: CHECKPOINT_VERSION,
            state: self,
        };
        let text = serde_json::to_string(&ck).map_err(|e| Error::Checkpoint(e.to_string()))?;
        fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let ck: Checkpoint =
            serde_json::from_str(&text).map_err(|e| Error::Checkpoint(e.to_string()))?;
        if ck.format != CHECKPOINT_FORMAT || ck.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint {} v{}",
                ck.format, ck.version
            )));
        }
        Ok(ck.state)
    }
}

/// Checkpoints are JSON objects `{"format", "version", "state"}`; floats are written in
/// shortest round-trip form so loading restores every value exactly.
pub const CHECKPOINT_FORMAT: &str = "otvq-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize)]
struct CheckpointRef<'a> {
    format: &'a str,
    version: u32,
    state: &'a TrainState,
}

#[derive(Deserialize)]
struct Checkpoint {
    format: String,
    version: u32,
    state: TrainState,
}

/// Full-dataset reconstruction and codebook-usage metrics.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalMetrics {
    pub mse: f64,
    /// `10·log10(peak²/mse)`; `+∞` when the reconstruction is exact.
    pub psnr: f64,
    pub usage: UsageStats,
}

const EVAL_CHUNK: usize = 512;

/// Encodes, quantizes and decodes every sample without building a tape.
pub fn evaluate(model: &Model, dataset: &Dataset) -> Result<EvalMetrics> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let n = dataset.len();
    let mut sq = 0.0;
    let mut indices = Vec::with_capacity(n * model.net.components);
    for start in (0..n).step_by(EVAL_CHUNK) {
        let idx: Vec<usize> = (start..n.min(start + EVAL_CHUNK)).collect();
        let x = dataset.gather(&idx)?;
        let z = model.net.encode(&x)?;
        let q = quantize(&z, &model.codebook)?;
        let x_hat = model.net.decode(&q.quantized)?;
        sq += x_hat
            .data()
            .iter()
            .zip(x.data())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>();
        indices.extend(q.indices);
    }
    let mse = sq / (n * dataset.n_x()) as f64;
    let peak = dataset.meta().peak;
    let psnr = if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (peak * peak / mse).log10()
    };
    let usage = usage_histogram(&indices, model.net.components, model.codebook.k())?;
    Ok(EvalMetrics { mse, psnr, usage })
}
