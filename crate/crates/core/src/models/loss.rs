use serde::{Deserialize, Serialize};

use super::net::{EncoderDecoder, Mlp};
use crate::diffcore::{NodeId, Tape, Tensor};
use crate::ot::{semi_dual_latents_on_tape, DualPotentials};
use crate::vq::{kl_to_uniform_from_logits, quantize_on_tape, vqvae_codebook_terms, Codebook};
use crate::{Error, Result};

/// Learnable parameters of one model: networks plus codebook.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub net: EncoderDecoder,
    pub codebook: Codebook,
}

/// Parameter groups, used to label gradient checks and gradient-flow tests.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamGroup {
    Encoder,
    Decoder,
    Atoms,
    Logits,
}

impl Model {
    pub fn new(net: EncoderDecoder, codebook: Codebook) -> Result<Self> {
        if codebook.dim() != net.latent_dim || codebook.components() != net.components {
            return Err(Error::shape(
                "model",
                format!(
                    "codebook M={} n_z={} vs net M={} n_z={}",
                    codebook.components(),
                    codebook.dim(),
                    net.components,
                    net.latent_dim
                ),
            ));
        }
        Ok(Self { net, codebook })
    }

    /// Encoder layers, decoder layers, atoms, logits, in that order.
    pub fn params(&self) -> Vec<&Tensor> {
        let mut out: Vec<&Tensor> = self.net.encoder.params().collect();
        out.extend(self.net.decoder.params());
        out.push(&self.codebook.atoms);
        out.push(&self.codebook.beta);
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out: Vec<&mut Tensor> = self.net.encoder.params_mut().collect();
        out.extend(self.net.decoder.params_mut());
        out.push(&mut self.codebook.atoms);
        out.push(&mut self.codebook.beta);
        out
    }

    /// Group of each entry of [`Model::params`].
    pub fn param_groups(&self) -> Vec<ParamGroup> {
        let enc = 2 * self.net.encoder.weights.len();
        let dec = 2 * self.net.decoder.weights.len();
        let mut g = vec![ParamGroup::Encoder; enc];
        g.extend(vec![ParamGroup::Decoder; dec]);
        g.push(ParamGroup::Atoms);
        g.push(ParamGroup::Logits);
        g
    }

    /// Records every parameter as a gradient-tracking leaf.
    pub fn leaves(&self, tape: &mut Tape) -> Result<ParamIds> {
        let ids = self
            .params()
            .into_iter()
            .map(|p| tape.leaf(p.clone(), true))
            .collect::<Result<Vec<_>>>()?;
        Ok(self.split_ids(&ids))
    }

    /// Groups node handles laid out as in [`Model::params`].
    pub fn split_ids(&self, ids: &[NodeId]) -> ParamIds {
        let enc = self.net.encoder.weights.len();
        let dec = self.net.decoder.weights.len();
        let pairs = |s: &[NodeId]| s.chunks(2).map(|c| (c[0], c[1])).collect::<Vec<_>>();
        ParamIds {
            encoder: pairs(&ids[..2 * enc]),
            decoder: pairs(&ids[2 * enc..2 * (enc + dec)]),
            atoms: ids[2 * (enc + dec)],
            beta: ids[2 * (enc + dec) + 1],
            components: self.net.components,
            latent_dim: self.net.latent_dim,
        }
    }
}

/// Node handles of a model's parameters on one tape.
#[derive(Clone, Debug)]
pub struct ParamIds {
    pub encoder: Vec<(NodeId, NodeId)>,
    pub decoder: Vec<(NodeId, NodeId)>,
    pub atoms: NodeId,
    pub beta: NodeId,
    pub components: usize,
    pub latent_dim: usize,
}

impl ParamIds {
    pub fn all(&self) -> Vec<NodeId> {
        let mut v: Vec<NodeId> = self.encoder.iter().flat_map(|&(w, b)| [w, b]).collect();
        v.extend(self.decoder.iter().flat_map(|&(w, b)| [w, b]));
        v.push(self.atoms);
        v.push(self.beta);
        v
    }
}

/// Weights of the two objectives.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    /// Commitment weight of VQ-VAE.
    pub beta_commit: f64,
    /// Weight of the Wasserstein term.
    pub lambda: f64,
    /// Weight of the KL-to-uniform regularizer on the codeword weights.
    pub lambda_r: f64,
    /// Entropic regularization of the semi-dual.
    pub eps: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            beta_commit: 0.25,
            lambda: 1e-3,
            lambda_r: 1.0,
            eps: 0.1,
        }
    }
}

/// Scalar parts of a loss evaluation. Terms that the active objective does not use are zero.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    pub recon: f64,
    pub ws_term: f64,
    pub kl_term: f64,
    pub vqvae_codebook: f64,
    pub vqvae_commit: f64,
}

/// Loss nodes on a tape plus the codeword indices chosen in the forward pass.
#[derive(Clone, Debug)]
pub struct LossNodes {
    pub total: NodeId,
    pub recon: NodeId,
    pub ws_term: Option<NodeId>,
    pub kl_term: Option<NodeId>,
    pub vqvae_codebook: Option<NodeId>,
    pub vqvae_commit: Option<NodeId>,
    pub latents: NodeId,
    pub indices: Vec<usize>,
}

impl LossNodes {
    pub fn breakdown(&self, tape: &Tape) -> Result<LossBreakdown> {
        let get = |n: Option<NodeId>| n.map_or(Ok(0.0), |n| tape.value(n).item());
        Ok(LossBreakdown {
            total: tape.value(self.total).item()?,
            recon: tape.value(self.recon).item()?,
            ws_term: get(self.ws_term)?,
            kl_term: get(self.kl_term)?,
            vqvae_codebook: get(self.vqvae_codebook)?,
            vqvae_commit: get(self.vqvae_commit)?,
        })
    }
}

struct Forward {
    z: NodeId,
    quantized: NodeId,
    recon: NodeId,
    indices: Vec<usize>,
}

fn forward(tape: &mut Tape, p: &ParamIds, x: NodeId) -> Result<Forward> {
    let b = tape.value(x).shape()[0];
    let (m, d) = (p.components, p.latent_dim);
    let flat = Mlp::forward_on_tape(tape, &p.encoder, x)?;
    let z = tape.reshape(flat, &[b, m, d])?;
    let q = quantize_on_tape(tape, z, p.atoms)?;
    let dec_in = tape.reshape(q.st_output, &[b, m * d])?;
    let x_hat = Mlp::forward_on_tape(tape, &p.decoder, dec_in)?;
    let diff = tape.sub(x_hat, x)?;
    let sq = tape.square(diff)?;
    let recon = tape.mean(sq)?;
    Ok(Forward {
        z,
        quantized: q.quantized,
        recon,
        indices: q.indices,
    })
}

/// `mse(x̂, x) + d(sg(z), z̄) + β·d(z, sg(z̄))` with the decoder fed the straight-through output.
pub fn vqvae_loss_on_tape(
    tape: &mut Tape,
    p: &ParamIds,
    x: NodeId,
    w: &LossWeights,
) -> Result<LossNodes> {
    let f = forward(tape, p, x)?;
    let (cb, cm) = vqvae_codebook_terms(tape, f.z, f.quantized)?;
    let weighted = tape.scale(cm, w.beta_commit)?;
    let s = tape.add(f.recon, cb)?;
    let total = tape.add(s, weighted)?;
    Ok(LossNodes {
        total,
        recon: f.recon,
        ws_term: None,
        kl_term: None,
        vqvae_codebook: Some(cb),
        vqvae_commit: Some(cm),
        latents: f.z,
        indices: f.indices,
    })
}

/// `mse(x̂, x) + λ·(1/M) Σ_m R(φ^m) + λ_r·Σ_m KL(π^m ‖ U_K)`, the potentials entering as
/// constants.
pub fn vqwae_loss_on_tape(
    tape: &mut Tape,
    p: &ParamIds,
    x: NodeId,
    phis: &DualPotentials,
    w: &LossWeights,
) -> Result<LossNodes> {
    let f = forward(tape, p, x)?;
    let b = tape.value(x).shape()[0];
    let (m, d) = (p.components, p.latent_dim);
    let k = tape.value(p.atoms).shape()[0];
    if phis.as_tensor().shape() != [m, k] {
        return Err(Error::shape(
            "vqwae_loss",
            format!("potentials {:?} for M={m}, K={k}", phis.as_tensor().shape()),
        ));
    }
    let z_rows = tape.reshape(f.z, &[b * m, d])?;
    let mut ws = None;
    let mut kl = None;
    for c in 0..m {
        let zc = tape.index_select(z_rows, (0..b).map(|i| i * m + c).collect())?;
        let row = tape.index_select(p.beta, vec![c])?;
        let logits = tape.reshape(row, &[k])?;
        let pi = tape.softmax(logits)?;
        let log_pi = tape.log_softmax(logits)?;
        let phi = tape.constant(Tensor::vector(phis.component(c).to_vec()))?;
        let r = semi_dual_latents_on_tape(tape, zc, p.atoms, pi, log_pi, phi, w.eps)?;
        let kl_c = kl_to_uniform_from_logits(tape, logits)?;
        ws = Some(match ws {
            None => r,
            Some(acc) => tape.add(acc, r)?,
        });
        kl = Some(match kl {
            None => kl_c,
            Some(acc) => tape.add(acc, kl_c)?,
        });
    }
    let ws_sum = ws.expect("M ≥ 1");
    let kl = kl.expect("M ≥ 1");
    let ws = tape.scale(ws_sum, 1.0 / m as f64)?;
    let ws_w = tape.scale(ws, w.lambda)?;
    let kl_w = tape.scale(kl, w.lambda_r)?;
    let s = tape.add(f.recon, ws_w)?;
    let total = tape.add(s, kl_w)?;
    Ok(LossNodes {
        total,
        recon: f.recon,
        ws_term: Some(ws),
        kl_term: Some(kl),
        vqvae_codebook: None,
        vqvae_commit: None,
        latents: f.z,
        indices: f.indices,
    })
}

/// VQ-VAE objective of `model` on batch `x`.
pub fn vqvae_loss(model: &Model, x: &Tensor, w: &LossWeights) -> Result<LossBreakdown> {
    let mut tape = Tape::new();
    let p = model.leaves(&mut tape)?;
    let xn = tape.constant(x.clone())?;
    vqvae_loss_on_tape(&mut tape, &p, xn, w)?.breakdown(&tape)
}

/// VQ-WAE objective of `model` on batch `x` at fixed potentials.
pub fn vqwae_loss(
    model: &Model,
    x: &Tensor,
    phis: &DualPotentials,
    w: &LossWeights,
) -> Result<LossBreakdown> {
    let mut tape = Tape::new();
    let p = model.leaves(&mut tape)?;
    let xn = tape.constant(x.clone())?;
    vqwae_loss_on_tape(&mut tape, &p, xn, phis, w)?.breakdown(&tape)
}
