//! Entropic semi-dual between a uniform batch of latents and a weighted codebook.
//!
//! For latents `z_1..z_B`, codewords `c_1..c_K` with weights `π` and a potential `φ` on the
//! codewords:
//!
//! ```text
//! R(φ) = (1/B) Σ_i −ε log Σ_k π_k exp((−ρ(z_i, c_k) + φ_k)/ε)  +  Σ_k π_k φ_k
//! ```
//!
//! `max_φ R(φ)` equals the entropic OT value `⟨γ, C⟩ + ε·KL(γ ‖ μ⊗ν)` computed by
//! [`super::sinkhorn`]. The potential only ever enters through its values at the K atoms, so
//! it is stored as a plain K-vector per latent component.

use serde::{Deserialize, Serialize};

use super::dist::GroundCost;
use crate::diffcore::{logsumexp, AdamState, NodeId, Tape, Tensor};
use crate::{Error, Result};

/// One potential vector of length K per latent component (`M×K`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DualPotentials {
    phi: Tensor,
}

impl DualPotentials {
    pub fn zeros(components: usize, k: usize) -> Self {
        Self {
            phi: Tensor::zeros(&[components, k]),
        }
    }

    pub fn from_tensor(phi: Tensor) -> Result<Self> {
        if phi.shape().len() != 2 {
            return Err(Error::shape(
                "dual_potentials",
                format!("{:?}", phi.shape()),
            ));
        }
        if !phi.is_finite() {
            return Err(Error::NonFinite("dual_potentials"));
        }
        Ok(Self { phi })
    }

    pub fn as_tensor(&self) -> &Tensor {
        &self.phi
    }

    pub fn components(&self) -> usize {
        self.phi.shape()[0]
    }

    pub fn k(&self) -> usize {
        self.phi.shape()[1]
    }

    pub fn component(&self, m: usize) -> &[f64] {
        self.phi.row(m)
    }
}

/// `R(φ)` evaluated directly (no tape). `pi` may contain zeros.
pub fn semi_dual_value(
    z: &Tensor,
    atoms: &Tensor,
    pi: &[f64],
    phi: &[f64],
    eps: f64,
) -> Result<f64> {
    let cost = GroundCost::SquaredEuclidean.matrix(z, atoms)?;
    semi_dual_from_cost(&cost, pi, phi, eps)
}

/// `R(φ)` for a precomputed `B×K` cost matrix.
pub fn semi_dual_from_cost(cost: &Tensor, pi: &[f64], phi: &[f64], eps: f64) -> Result<f64> {
    let k = pi.len();
    if cost.shape().len() != 2 || cost.shape()[1] != k || phi.len() != k {
        return Err(Error::shape(
            "semi_dual",
            format!("cost {:?}, π {k}, φ {}", cost.shape(), phi.len()),
        ));
    }
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "eps must be > 0, got {eps}"
        )));
    }
    let b = cost.shape()[0];
    let mut scratch = vec![0.0; k];
    let mut soft_c = 0.0;
    for i in 0..b {
        for kk in 0..k {
            scratch[kk] = pi[kk].ln() + (phi[kk] - cost.at2(i, kk)) / eps;
        }
        soft_c += -eps * logsumexp(&scratch);
    }
    let linear: f64 = pi.iter().zip(phi).map(|(p, f)| p * f).sum();
    let v = soft_c / b as f64 + linear;
    if !v.is_finite() {
        return Err(Error::NonFinite("semi_dual"));
    }
    Ok(v)
}

/// `R(φ)` recorded on a tape from a `B×K` cost node and length-K `pi`, `log_pi`, `phi`
/// nodes. `log_pi` is passed separately so callers can use a stable log-softmax.
pub fn semi_dual_on_tape(
    tape: &mut Tape,
    cost: NodeId,
    pi: NodeId,
    log_pi: NodeId,
    phi: NodeId,
    eps: f64,
) -> Result<NodeId> {
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "eps must be > 0, got {eps}"
        )));
    }
    let phi_scaled = tape.scale(phi, 1.0 / eps)?;
    let row = tape.add(phi_scaled, log_pi)?;
    let neg_cost = tape.scale(cost, -1.0 / eps)?;
    let logits = tape.add_row(neg_cost, row)?;
    let lse = tape.logsumexp(logits)?;
    let mean = tape.mean(lse)?;
    let soft_c = tape.scale(mean, -eps)?;
    let weighted = tape.mul(pi, phi)?;
    let linear = tape.sum(weighted)?;
    tape.add(soft_c, linear)
}

/// As [`semi_dual_on_tape`] but from latent (`B×d`) and codeword (`K×d`) nodes.
pub fn semi_dual_latents_on_tape(
    tape: &mut Tape,
    z: NodeId,
    atoms: NodeId,
    pi: NodeId,
    log_pi: NodeId,
    phi: NodeId,
    eps: f64,
) -> Result<NodeId> {
    let cost = tape.pairwise_sq_dist(z, atoms)?;
    semi_dual_on_tape(tape, cost, pi, log_pi, phi, eps)
}

/// Splits `B×M×d` latents into M matrices of shape `B×d`; `B×d` input is one component.
pub fn latent_components(z: &Tensor) -> Result<Vec<Tensor>> {
    match *z.shape() {
        [_, _] => Ok(vec![z.clone()]),
        [b, m, d] => (0..m)
            .map(|c| {
                let data = (0..b)
                    .flat_map(|i| z.row(i)[c * d..(c + 1) * d].to_vec())
                    .collect();
                Tensor::new(vec![b, d], data)
            })
            .collect(),
        _ => Err(Error::shape(
            "latent_components",
            format!("{:?}", z.shape()),
        )),
    }
}

/// Gradient ascent on the potentials with persistent Adam state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DualAscent {
    pub adam: AdamState,
    pub eps: f64,
}

impl DualAscent {
    pub fn new(lr: f64, eps: f64) -> Self {
        Self {
            adam: AdamState::new(lr),
            eps,
        }
    }

    /// Runs `steps` ascent steps on every component's potential. `z` is `B×M×d` (or `B×d`
    /// for one component), `pi` is `M×K` with strictly positive entries.
    pub fn run(
        &mut self,
        z: &Tensor,
        atoms: &Tensor,
        pi: &Tensor,
        phis: &mut DualPotentials,
        steps: usize,
    ) -> Result<()> {
        if steps == 0 {
            return Ok(());
        }
        let comps = latent_components(z)?;
        let m = comps.len();
        let k = atoms.rows();
        if pi.shape() != [m, k] || phis.as_tensor().shape() != [m, k] {
            return Err(Error::shape(
                "dual_ascent",
                format!(
                    "{m} components, {k} atoms, π {:?}, φ {:?}",
                    pi.shape(),
                    phis.as_tensor().shape()
                ),
            ));
        }
        if pi.data().iter().any(|&p| !(p > 0.0)) {
            return Err(Error::InvalidArgument("π must be strictly positive".into()));
        }
        let costs = comps
            .iter()
            .map(|zc| GroundCost::SquaredEuclidean.matrix(zc, atoms))
            .collect::<Result<Vec<_>>>()?;
        let log_pi: Vec<Tensor> = (0..m)
            .map(|c| Tensor::vector(pi.row(c).iter().map(|p| p.ln()).collect()))
            .collect();
        let pis: Vec<Tensor> = (0..m).map(|c| Tensor::vector(pi.row(c).to_vec())).collect();

        let mut params = vec![phis.as_tensor().clone()];
        for _ in 0..steps {
            let mut tape = Tape::new();
            let phi = tape.leaf(params[0].clone(), true)?;
            let mut total = None;
            for c in 0..m {
                let row = tape.index_select(phi, vec![c])?;
                let phi_c = tape.reshape(row, &[k])?;
                let cost = tape.constant(costs[c].clone())?;
                let p = tape.constant(pis[c].clone())?;
                let lp = tape.constant(log_pi[c].clone())?;
                let v = semi_dual_on_tape(&mut tape, cost, p, lp, phi_c, self.eps)?;
                total = Some(match total {
                    None => v,
                    Some(t) => tape.add(t, v)?,
                });
            }
            let total = total.expect("at least one component");
            let grads = tape.backward(total)?;
            let mut ascent = grads.collect(&[phi])?;
            ascent[0].data_mut().iter_mut().for_each(|g| *g = -*g);
            self.adam.step(&mut params, &ascent)?;
        }
        *phis = DualPotentials::from_tensor(params.pop().expect("one param"))?;
        Ok(())
    }
}

/// `steps` Adam ascent steps from `phis` with a fresh optimizer state.
pub fn dual_ascent(
    z: &Tensor,
    atoms: &Tensor,
    pi: &Tensor,
    phis: &DualPotentials,
    steps: usize,
    lr: f64,
    eps: f64,
) -> Result<DualPotentials> {
    let mut out = phis.clone();
    DualAscent::new(lr, eps).run(z, atoms, pi, &mut out, steps)?;
    Ok(out)
}
