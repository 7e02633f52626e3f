//! Joint cost of per-component plans glued by conditional independence.
//!
//! Given M plans `P_m` that share the row marginal `μ`, the coupling
//! `Γ(i, (k_1..k_M)) = μ_i Π_m P_m(i, k_m)/μ_i` transports `μ` onto a joint codebook law whose
//! m-th marginal is the column marginal of `P_m`. Under the averaged cost
//! `(1/M) Σ_m C_m(i, k_m)` its value is exactly the average of the per-component values.

use super::dist::TransportPlan;
use crate::diffcore::Tensor;
use crate::{Error, Result};

/// The product coupling over `N × K^M` joint atoms (tuples enumerated row-major, the last
/// component varying fastest).
#[derive(Clone, Debug)]
pub struct IndependentCoupling {
    pub matrix: Tensor,
    /// Column marginal: the induced law on joint codeword tuples.
    pub joint_weights: Vec<f64>,
    pub components: usize,
    pub k: usize,
}

impl IndependentCoupling {
    /// Codeword index of component `m` in joint atom `t`.
    pub fn tuple_component(&self, t: usize, m: usize) -> usize {
        let stride = self.k.pow((self.components - 1 - m) as u32);
        (t / stride) % self.k
    }

    /// Averaged joint cost matrix `N × K^M` built from per-component costs.
    pub fn joint_cost(&self, costs: &[Tensor]) -> Result<Tensor> {
        let n = self.matrix.shape()[0];
        let t_count = self.joint_weights.len();
        let mut data = vec![0.0; n * t_count];
        for i in 0..n {
            for t in 0..t_count {
                let s: f64 = (0..self.components)
                    .map(|m| costs[m].at2(i, self.tuple_component(t, m)))
                    .sum();
                data[i * t_count + t] = s / self.components as f64;
            }
        }
        Tensor::new(vec![n, t_count], data)
    }
}

fn check_plans(plans: &[TransportPlan]) -> Result<(usize, usize)> {
    let first = plans
        .first()
        .ok_or_else(|| Error::Infeasible("no component plans".into()))?;
    let (n, k) = (first.rows(), first.cols());
    for (m, p) in plans.iter().enumerate() {
        if p.rows() != n || p.cols() != k {
            return Err(Error::Infeasible(format!(
                "plan {m} is {}×{}, expected {n}×{k}",
                p.rows(),
                p.cols()
            )));
        }
        if p.matrix.data().iter().any(|&x| x < 0.0 || !x.is_finite()) {
            return Err(Error::Infeasible(format!(
                "plan {m} has negative or non-finite mass"
            )));
        }
        let drift = p
            .row_marginal
            .iter()
            .zip(&first.row_marginal)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        if drift > 1e-9 {
            return Err(Error::Infeasible(format!(
                "plan {m} row marginal differs from plan 0 by {drift}"
            )));
        }
    }
    Ok((n, k))
}

pub fn independent_coupling(plans: &[TransportPlan]) -> Result<IndependentCoupling> {
    let (n, k) = check_plans(plans)?;
    let m_count = plans.len();
    let t_count = k
        .checked_pow(m_count as u32)
        .filter(|t| t.checked_mul(n).is_some())
        .ok_or_else(|| Error::InvalidArgument("joint codebook too large".into()))?;
    let mut coupling = IndependentCoupling {
        matrix: Tensor::zeros(&[n, t_count]),
        joint_weights: vec![0.0; t_count],
        components: m_count,
        k,
    };
    let mu = &plans[0].row_marginal;
    let mut data = vec![0.0; n * t_count];
    for i in 0..n {
        if mu[i] <= 0.0 {
            continue;
        }
        for t in 0..t_count {
            let mut mass = mu[i];
            for (m, p) in plans.iter().enumerate() {
                mass *= p.matrix.at2(i, coupling.tuple_component(t, m)) / mu[i];
            }
            data[i * t_count + t] = mass;
            coupling.joint_weights[t] += mass;
        }
    }
    coupling.matrix = Tensor::new(vec![n, t_count], data)?;
    Ok(coupling)
}

/// `(1/M) Σ_m value_m`, checked against the joint cost of the independent coupling.
pub fn independent_joint_cost(plans: &[TransportPlan], costs: &[Tensor]) -> Result<f64> {
    let (n, k) = check_plans(plans)?;
    if costs.len() != plans.len() || costs.iter().any(|c| c.shape() != [n, k]) {
        return Err(Error::shape(
            "independent_joint_cost",
            "one n×k cost per plan",
        ));
    }
    let average = plans
        .iter()
        .zip(costs)
        .map(|(p, c)| TransportPlan::from_matrix(p.matrix.clone(), c).map(|q| q.value))
        .sum::<Result<f64>>()?
        / plans.len() as f64;
    let coupling = independent_coupling(plans)?;
    let joint = TransportPlan::from_matrix(coupling.matrix.clone(), &coupling.joint_cost(costs)?)?;
    if (joint.value - average).abs() > 1e-9 * (1.0 + average.abs()) {
        return Err(Error::Infeasible(format!(
            "independent coupling cost {} disagrees with component average {average}",
            joint.value
        )));
    }
    Ok(average)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_component_equals_plan_value() {
        let c = Tensor::from_rows(&[vec![0.0, 2.0], vec![1.0, 0.5]]).unwrap();
        let m = Tensor::from_rows(&[vec![0.5, 0.0], vec![0.1, 0.4]]).unwrap();
        let p = TransportPlan::from_matrix(m, &c).unwrap();
        let v = independent_joint_cost(std::slice::from_ref(&p), &[c]).unwrap();
        assert!((v - p.value).abs() < 1e-15);
    }

    #[test]
    fn identical_zero_cost_identities() {
        let c = Tensor::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let m = Tensor::from_rows(&[vec![0.5, 0.0], vec![0.0, 0.5]]).unwrap();
        let p = TransportPlan::from_matrix(m, &c).unwrap();
        let v = independent_joint_cost(&[p.clone(), p], &[c.clone(), c]).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn coupling_marginals() {
        let c = Tensor::zeros(&[2, 2]);
        let a = TransportPlan::from_matrix(
            Tensor::from_rows(&[vec![0.3, 0.2], vec![0.1, 0.4]]).unwrap(),
            &c,
        )
        .unwrap();
        let b = TransportPlan::from_matrix(
            Tensor::from_rows(&[vec![0.5, 0.0], vec![0.25, 0.25]]).unwrap(),
            &c,
        )
        .unwrap();
        let g = independent_coupling(&[a.clone(), b.clone()]).unwrap();
        // Component marginals of the joint law.
        for (m, plan) in [&a, &b].into_iter().enumerate() {
            for kk in 0..2 {
                let s: f64 = (0..4)
                    .filter(|&t| g.tuple_component(t, m) == kk)
                    .map(|t| g.joint_weights[t])
                    .sum();
                assert!((s - plan.col_marginal[kk]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn rejects_mismatched_rows() {
        let c = Tensor::zeros(&[2, 2]);
        let a = TransportPlan::from_matrix(
            Tensor::from_rows(&[vec![0.5, 0.0], vec![0.0, 0.5]]).unwrap(),
            &c,
        )
        .unwrap();
        let b = TransportPlan::from_matrix(
            Tensor::from_rows(&[vec![0.9, 0.0], vec![0.0, 0.1]]).unwrap(),
            &c,
        )
        .unwrap();
        assert!(matches!(
            independent_joint_cost(&[a, b], &[c.clone(), c]),
            Err(Error::Infeasible(_))
        ));
    }
}
