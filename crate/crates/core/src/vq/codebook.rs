use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::diffcore::{NodeId, Tape, Tensor};
use crate::{Error, Result};

/// K learnable codewords in `R^{n_z}` and one logit vector per latent component.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Codebook {
    /// `K×n_z`.
    pub atoms: Tensor,
    /// `M×K`; the codeword weights of component m are `softmax(beta[m])`.
    pub beta: Tensor,
}

impl Codebook {
    pub fn new(atoms: Tensor, beta: Tensor) -> Result<Self> {
        if atoms.shape().len() != 2 || beta.shape().len() != 2 {
            return Err(Error::shape(
                "codebook",
                format!("atoms {:?}, beta {:?}", atoms.shape(), beta.shape()),
            ));
        }
        if atoms.shape()[0] != beta.shape()[1] {
            return Err(Error::shape(
                "codebook",
                format!("{} atoms but {} logits", atoms.shape()[0], beta.shape()[1]),
            ));
        }
        Ok(Self { atoms, beta })
    }

    /// Atoms i.i.d. uniform on `[−1/K, 1/K]`; logits zero so every `π^m` starts uniform.
    pub fn init_uniform(k: usize, components: usize, dim: usize, rng: &mut impl Rng) -> Self {
        let r = 1.0 / k as f64;
        let data = (0..k * dim).map(|_| rng.random_range(-r..=r)).collect();
        Self {
            atoms: Tensor::new(vec![k, dim], data).expect("sized"),
            beta: Tensor::zeros(&[components, k]),
        }
    }

    /// Atoms copied from randomly chosen latent vectors (`N×M×n_z` or `N×n_z`).
    pub fn init_from_latents(
        latents: &Tensor,
        k: usize,
        components: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let dim = *latents.shape().last().expect("non-scalar");
        let pool = latents.numel() / dim;
        let mut data = Vec::with_capacity(k * dim);
        for _ in 0..k {
            let i = rng.random_range(0..pool);
            data.extend_from_slice(&latents.data()[i * dim..(i + 1) * dim]);
        }
        Ok(Self {
            atoms: Tensor::new(vec![k, dim], data)?,
            beta: Tensor::zeros(&[components, k]),
        })
    }

    pub fn k(&self) -> usize {
        self.atoms.shape()[0]
    }

    pub fn dim(&self) -> usize {
        self.atoms.shape()[1]
    }

    pub fn components(&self) -> usize {
        self.beta.shape()[0]
    }

    /// Rowwise softmax of the logits (`M×K`).
    pub fn pi(&self) -> Tensor {
        pi_from_beta(&self.beta)
    }
}

/// Rowwise softmax of an `M×K` logit matrix.
pub fn pi_from_beta(beta: &Tensor) -> Tensor {
    let k = beta.shape()[1];
    let mut out = Vec::with_capacity(beta.numel());
    for row in beta.data().chunks(k) {
        let lse = crate::diffcore::logsumexp(row);
        out.extend(row.iter().map(|b| (b - lse).exp()));
    }
    Tensor::new(beta.shape().to_vec(), out).expect("same shape")
}

/// `π^m = softmax(β^m)` on the tape, differentiable w.r.t. the logits.
pub fn pi_on_tape(tape: &mut Tape, beta: NodeId) -> Result<NodeId> {
    tape.softmax(beta)
}

/// `KL(π ‖ U_K) = ln K + Σ π_k ln π_k`, with `0 ln 0 = 0`.
pub fn kl_to_uniform(pi: &[f64]) -> f64 {
    let k = pi.len() as f64;
    k.ln()
        + pi.iter()
            .filter(|&&p| p > 0.0)
            .map(|p| p * p.ln())
            .sum::<f64>()
}

/// [`kl_to_uniform`] on the tape for a length-K probability node.
pub fn kl_to_uniform_on_tape(tape: &mut Tape, pi: NodeId) -> Result<NodeId> {
    let k = tape.value(pi).numel() as f64;
    let ent = tape.xlogx(pi)?;
    let s = tape.sum(ent)?;
    tape.add_scalar(s, k.ln())
}

/// `KL(softmax(β) ‖ U_K)` from a length-K logit node via log-softmax, which stays finite
/// when some weights underflow.
pub fn kl_to_uniform_from_logits(tape: &mut Tape, beta: NodeId) -> Result<NodeId> {
    let k = tape.value(beta).numel() as f64;
    let p = tape.softmax(beta)?;
    let lp = tape.log_softmax(beta)?;
    let prod = tape.mul(p, lp)?;
    let s = tape.sum(prod)?;
    tape.add_scalar(s, k.ln())
}
