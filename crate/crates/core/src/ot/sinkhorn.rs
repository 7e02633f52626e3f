//! Log-domain Sinkhorn.
//!
//! The entropic objective is `⟨γ, C⟩ + ε·KL(γ ‖ μ⊗ν)`: the relative entropy is measured
//! against the product of the marginals rather than the plain entropy of `γ`. With this
//! convention the optimal plan is `γ_ij = μ_i ν_j exp((f_i + g_j − C_ij)/ε)` and the optimum
//! equals `Σ μ_i f_i + Σ ν_j g_j`, which is also the maximum of the semi-dual in
//! [`super::semidual`] with no constant offset.

use super::dist::{DiscreteDist, TransportPlan};
use crate::diffcore::{logsumexp, Tensor};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SinkhornOptions {
    pub eps: f64,
    pub max_iters: usize,
    /// Stop once the L∞ marginal violation drops below this.
    pub tol: f64,
}

impl SinkhornOptions {
    pub fn new(eps: f64) -> Self {
        Self {
            eps,
            max_iters: 10_000,
            tol: 1e-9,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SinkhornResult {
    pub plan: TransportPlan,
    /// `⟨γ, C⟩`.
    pub transport_cost: f64,
    /// `⟨γ, C⟩ + ε·KL(γ ‖ μ⊗ν)`.
    pub entropic_value: f64,
    /// Row and column potentials.
    pub f: Vec<f64>,
    pub g: Vec<f64>,
    pub iterations: usize,
    pub marginal_error: f64,
    /// False when `max_iters` ran out first; the plan is still returned.
    pub converged: bool,
}

pub fn sinkhorn(
    mu: &DiscreteDist,
    nu: &DiscreteDist,
    cost: &Tensor,
    opts: SinkhornOptions,
) -> Result<SinkhornResult> {
    sinkhorn_weights(mu.weights(), nu.weights(), cost, opts)
}

pub fn sinkhorn_weights(
    a: &[f64],
    b: &[f64],
    cost: &Tensor,
    opts: SinkhornOptions,
) -> Result<SinkhornResult> {
    let (n, k) = (a.len(), b.len());
    if cost.shape() != [n, k] {
        return Err(Error::shape(
            "sinkhorn",
            format!("cost {:?} for marginals {n}×{k}", cost.shape()),
        ));
    }
    if !(opts.eps > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "eps must be > 0, got {}",
            opts.eps
        )));
    }
    let eps = opts.eps;
    let log_a: Vec<f64> = a.iter().map(|w| w.ln()).collect();
    let log_b: Vec<f64> = b.iter().map(|w| w.ln()).collect();
    let c = |i: usize, j: usize| cost.at2(i, j);

    let mut f = vec![0.0; n];
    let mut g = vec![0.0; k];
    let mut scratch = vec![0.0; n.max(k)];
    let mut err = f64::INFINITY;
    let mut iterations = 0;
    while iterations < opts.max_iters {
        iterations += 1;
        for i in 0..n {
            if a[i] == 0.0 {
                continue;
            }
            for j in 0..k {
                scratch[j] = log_b[j] + (g[j] - c(i, j)) / eps;
            }
            f[i] = -eps * logsumexp(&scratch[..k]);
        }
        for j in 0..k {
            if b[j] == 0.0 {
                continue;
            }
            for i in 0..n {
                scratch[i] = log_a[i] + (f[i] - c(i, j)) / eps;
            }
            g[j] = -eps * logsumexp(&scratch[..n]);
        }
        // Columns are exact after the g-update; measure the rows.
        err = 0.0;
        for i in 0..n {
            let row: f64 = (0..k)
                .map(|j| (log_a[i] + log_b[j] + (f[i] + g[j] - c(i, j)) / eps).exp())
                .sum();
            err = err.max((row - a[i]).abs());
        }
        if err < opts.tol {
            break;
        }
    }

    let mut plan = vec![0.0; n * k];
    let mut kl = 0.0;
    for i in 0..n {
        for j in 0..k {
            if a[i] == 0.0 || b[j] == 0.0 {
                continue;
            }
            let log_ratio = (f[i] + g[j] - c(i, j)) / eps;
            let p = (log_a[i] + log_b[j] + log_ratio).exp();
            plan[i * k + j] = p;
            if p > 0.0 {
                kl += p * log_ratio;
            }
        }
    }
    let plan = TransportPlan::from_matrix(Tensor::new(vec![n, k], plan)?, cost)?;
    if !plan.value.is_finite() || !kl.is_finite() {
        return Err(Error::NonFinite("sinkhorn"));
    }
    let marginal_error = plan.marginal_error(a, b);
    Ok(SinkhornResult {
        transport_cost: plan.value,
        entropic_value: plan.value + eps * kl,
        plan,
        f,
        g,
        iterations,
        marginal_error,
        converged: err < opts.tol,
    })
}
