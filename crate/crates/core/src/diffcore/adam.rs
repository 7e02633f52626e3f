use serde::{Deserialize, Serialize};

use super::tape::{GradientMap, NodeId};
use super::tensor::Tensor;
use crate::{Error, Result};

/// Adam with bias correction. Moments are allocated lazily on the first step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub t: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl AdamState {
    pub fn new(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn first_moments(&self) -> &[Tensor] {
        &self.m
    }

    pub fn second_moments(&self) -> &[Tensor] {
        &self.v
    }

    /// One descent step on `params` using `grads[i]` for the i-th parameter.
    pub fn step<'a, I>(&mut self, params: I, grads: &[Tensor]) -> Result<()>
    where
        I: IntoIterator<Item = &'a mut Tensor>,
    {
        let mut params: Vec<&'a mut Tensor> = params.into_iter().collect();
        if grads.len() != params.len() {
            return Err(Error::MissingGradient(grads.len().min(params.len())));
        }
        if self.m.is_empty() {
            self.m = params.iter().map(|p| Tensor::zeros(p.shape())).collect();
            self.v = self.m.clone();
        }
        if self.m.len() != params.len() {
            return Err(Error::shape(
                "adam",
                format!("state for {} params, got {}", self.m.len(), params.len()),
            ));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.shape() != g.shape() || self.m[i].shape() != p.shape() {
                return Err(Error::shape(
                    "adam",
                    format!("param {i}: {:?} vs grad {:?}", p.shape(), g.shape()),
                ));
            }
        }
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            let it = p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut().iter_mut().zip(v.data_mut()));
            for ((p, &g), (m, v)) in it {
                *m = self.beta1 * *m + (1.0 - self.beta1) * g;
                *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                *p -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

/// Adam step with gradients looked up by leaf handle; `ids[i]` is the leaf of `params[i]`.
pub fn adam_step(
    params: &mut [Tensor],
    ids: &[NodeId],
    grads: &GradientMap,
    state: &mut AdamState,
) -> Result<()> {
    let g = grads.collect(ids)?;
    state.step(params, &g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffcore::Tape;

    #[test]
    fn first_step_closed_form() {
        let g = [0.5, -2.0, 1e-3];
        let mut p = vec![Tensor::vector(vec![1.0, 1.0, 1.0])];
        let mut adam = AdamState::new(0.01);
        adam.step(&mut p, &[Tensor::vector(g.to_vec())]).unwrap();
        for (i, gi) in g.iter().enumerate() {
            let expect = 1.0 - 0.01 * gi / (gi.abs() + 1e-8);
            assert!((p[0].data()[i] - expect).abs() < 1e-15);
        }
        assert_eq!(adam.t, 1);
    }

    #[test]
    fn zero_gradient_is_noop() {
        let mut p = vec![Tensor::vector(vec![0.3, -0.7])];
        let before = p.clone();
        let mut adam = AdamState::new(0.1);
        adam.step(&mut p, &[Tensor::zeros(&[2])]).unwrap();
        assert_eq!(p, before);
    }

    #[test]
    fn two_steps_match_scalar_recurrence() {
        // Hand-rolled scalar Adam, written independently of `step`.
        let (lr, b1, b2, eps, g) = (0.05f64, 0.9f64, 0.999f64, 1e-8f64, 0.8f64);
        let (mut x, mut m, mut v) = (2.0f64, 0.0f64, 0.0f64);
        for t in 1..=2 {
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let mh = m / (1.0 - b1.powi(t));
            let vh = v / (1.0 - b2.powi(t));
            x -= lr * mh / (vh.sqrt() + eps);
        }
        let mut p = vec![Tensor::scalar(2.0)];
        let mut adam = AdamState::new(lr);
        for _ in 0..2 {
            adam.step(&mut p, &[Tensor::scalar(g)]).unwrap();
        }
        assert_eq!(p[0].data()[0], x);
        assert_eq!(adam.t, 2);
    }

    #[test]
    fn lr_zero_is_identity() {
        let mut p = vec![Tensor::vector(vec![0.3, -0.7]), Tensor::scalar(4.0)];
        let before = p.clone();
        let mut adam = AdamState::new(0.0);
        for _ in 0..3 {
            adam.step(
                &mut p,
                &[Tensor::vector(vec![1.0, -3.0]), Tensor::scalar(2.0)],
            )
            .unwrap();
        }
        assert_eq!(p, before);
    }

    #[test]
    fn missing_gradient_is_reported() {
        let mut tape = Tape::new();
        let a = tape.leaf(Tensor::scalar(1.0), true).unwrap();
        let b = tape.leaf(Tensor::scalar(1.0), false).unwrap();
        let l = tape.square(a).unwrap();
        let grads = tape.backward(l).unwrap();
        let mut params = vec![Tensor::scalar(1.0), Tensor::scalar(1.0)];
        let mut adam = AdamState::new(0.1);
        let err = adam_step(&mut params, &[a, b], &grads, &mut adam).unwrap_err();
        assert!(matches!(err, Error::MissingGradient(1)));
    }
}
