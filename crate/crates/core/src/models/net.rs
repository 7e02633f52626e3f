use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::diffcore::{matmul, NodeId, Tape, Tensor};
use crate::{Error, Result};

/// Fully connected network with relu between layers and a linear output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    /// `in×out` per layer.
    pub weights: Vec<Tensor>,
    pub biases: Vec<Tensor>,
}

impl Mlp {
    /// Layer widths `sizes[0] → … → sizes[last]`, weights and biases drawn from
    /// `U(±1/√fan_in)`.
    pub fn init(sizes: &[usize], rng: &mut impl Rng) -> Self {
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for w in sizes.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let r = 1.0 / (fan_in as f64).sqrt();
            let mut draw = |n: usize| (0..n).map(|_| rng.random_range(-r..r)).collect::<Vec<_>>();
            weights
                .push(Tensor::new(vec![fan_in, fan_out], draw(fan_in * fan_out)).expect("sized"));
            biases.push(Tensor::vector(draw(fan_out)));
        }
        Self { weights, biases }
    }

    pub fn from_layers(weights: Vec<Tensor>, biases: Vec<Tensor>) -> Result<Self> {
        if weights.is_empty() || weights.len() != biases.len() {
            return Err(Error::shape("mlp", "need one bias per weight matrix"));
        }
        for (i, (w, b)) in weights.iter().zip(&biases).enumerate() {
            if w.shape().len() != 2 || b.shape() != [w.shape()[1]] {
                return Err(Error::shape(
                    "mlp",
                    format!("layer {i}: weight {:?}, bias {:?}", w.shape(), b.shape()),
                ));
            }
            if i > 0 && weights[i - 1].shape()[1] != w.shape()[0] {
                return Err(Error::shape("mlp", format!("layer {i} input width")));
            }
        }
        Ok(Self { weights, biases })
    }

    pub fn input_dim(&self) -> usize {
        self.weights[0].shape()[0]
    }

    pub fn output_dim(&self) -> usize {
        self.weights.last().expect("non-empty").shape()[1]
    }

    /// Forward pass without a tape on a `B×in` batch.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        if x.shape().len() != 2 || x.shape()[1] != self.input_dim() {
            return Err(Error::shape(
                "mlp",
                format!("input {:?}, expected B×{}", x.shape(), self.input_dim()),
            ));
        }
        let b = x.shape()[0];
        let last = self.weights.len() - 1;
        let mut h = x.data().to_vec();
        for (i, (w, bias)) in self.weights.iter().zip(&self.biases).enumerate() {
            let (din, dout) = (w.shape()[0], w.shape()[1]);
            let mut out = matmul(&h, w.data(), b, din, dout);
            for row in out.chunks_mut(dout) {
                for (o, bv) in row.iter_mut().zip(bias.data()) {
                    *o += bv;
                    if i < last && *o < 0.0 {
                        *o = 0.0;
                    }
                }
            }
            h = out;
        }
        let out = Tensor::new(vec![b, self.output_dim()], h)?;
        if !out.is_finite() {
            return Err(Error::NonFinite("mlp forward"));
        }
        Ok(out)
    }

    /// Forward pass on a tape with the layer parameters given as `(weight, bias)` nodes.
    pub fn forward_on_tape(
        tape: &mut Tape,
        layers: &[(NodeId, NodeId)],
        x: NodeId,
    ) -> Result<NodeId> {
        let mut h = x;
        for (i, &(w, b)) in layers.iter().enumerate() {
            let lin = tape.matmul(h, w)?;
            h = tape.add_row(lin, b)?;
            if i + 1 < layers.len() {
                h = tape.relu(h)?;
            }
        }
        Ok(h)
    }

    pub fn params(&self) -> impl Iterator<Item = &Tensor> {
        self.weights
            .iter()
            .zip(&self.biases)
            .flat_map(|(w, b)| [w, b])
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut Tensor> {
        self.weights
            .iter_mut()
            .zip(self.biases.iter_mut())
            .flat_map(|(w, b)| [w, b])
    }
}

/// Encoder `R^{n_x} → R^{M·n_z}` and decoder `R^{M·n_z} → R^{n_x}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncoderDecoder {
    pub encoder: Mlp,
    pub decoder: Mlp,
    pub components: usize,
    pub latent_dim: usize,
}

impl EncoderDecoder {
    /// Encoder widths `n_x → hidden… → M·n_z`; the decoder mirrors them.
    pub fn init(
        n_x: usize,
        hidden: &[usize],
        components: usize,
        latent_dim: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let mut sizes = vec![n_x];
        sizes.extend_from_slice(hidden);
        sizes.push(components * latent_dim);
        let encoder = Mlp::init(&sizes, rng);
        sizes.reverse();
        let decoder = Mlp::init(&sizes, rng);
        Self {
            encoder,
            decoder,
            components,
            latent_dim,
        }
    }

    pub fn new(encoder: Mlp, decoder: Mlp, components: usize, latent_dim: usize) -> Result<Self> {
        let code = components * latent_dim;
        if encoder.output_dim() != code
            || decoder.input_dim() != code
            || decoder.output_dim() != encoder.input_dim()
        {
            return Err(Error::shape(
                "encoder_decoder",
                format!(
                    "encoder {}→{}, decoder {}→{}, M·n_z = {code}",
                    encoder.input_dim(),
                    encoder.output_dim(),
                    decoder.input_dim(),
                    decoder.output_dim()
                ),
            ));
        }
        Ok(Self {
            encoder,
            decoder,
            components,
            latent_dim,
        })
    }

    pub fn n_x(&self) -> usize {
        self.encoder.input_dim()
    }

    /// `B×n_x` → `B×M×n_z`.
    pub fn encode(&self, x: &Tensor) -> Result<Tensor> {
        let flat = self.encoder.forward(x)?;
        flat.reshape(&[x.shape()[0], self.components, self.latent_dim])
    }

    /// `B×M×n_z` → `B×n_x`.
    pub fn decode(&self, z: &Tensor) -> Result<Tensor> {
        if z.shape().len() != 3 || z.shape()[1..] != [self.components, self.latent_dim] {
            return Err(Error::shape(
                "decode",
                format!(
                    "latents {:?}, expected B×{}×{}",
                    z.shape(),
                    self.components,
                    self.latent_dim
                ),
            ));
        }
        let flat = z.reshape(&[z.shape()[0], self.components * self.latent_dim])?;
        self.decoder.forward(&flat)
    }
}
