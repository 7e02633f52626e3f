use super::codebook::Codebook;
use crate::diffcore::{pairwise_sq_dist, NodeId, Tape, Tensor};
use crate::{Error, Result};

/// Output of the nearest-codeword quantizer for `B×M×n_z` latents.
#[derive(Clone, Debug, PartialEq)]
pub struct QuantizeResult {
    /// Row-major `B×M` codeword indices.
    pub indices: Vec<usize>,
    pub batch: usize,
    pub components: usize,
    /// `B×M×n_z` gathered codewords.
    pub quantized: Tensor,
    /// Decoder input of the straight-through estimator; equal in value to `quantized`.
    pub st_output: Tensor,
}

impl QuantizeResult {
    pub fn index(&self, b: usize, m: usize) -> usize {
        self.indices[b * self.components + m]
    }
}

/// Index of the nearest row of `atoms` (`K×d`) for every `d`-vector in `points`; ties go to
/// the lowest index.
pub fn nearest_codewords(points: &[f64], atoms: &Tensor) -> Result<Vec<usize>> {
    let k = atoms.rows();
    if k == 0 || atoms.numel() == 0 {
        return Err(Error::EmptyCodebook);
    }
    let d = atoms.shape()[1];
    if !points.len().is_multiple_of(d) {
        return Err(Error::shape(
            "quantize",
            format!("{} values not a multiple of n_z = {d}", points.len()),
        ));
    }
    let dist = pairwise_sq_dist(points, atoms.data(), d);
    Ok(dist
        .chunks(k)
        .map(|row| {
            let mut best = 0;
            for (j, &v) in row.iter().enumerate().skip(1) {
                if v < row[best] {
                    best = j;
                }
            }
            best
        })
        .collect())
}

fn check_latents(z: &Tensor, codebook: &Codebook) -> Result<(usize, usize, usize)> {
    match *z.shape() {
        [b, m, d] if d == codebook.dim() && m == codebook.components() => Ok((b, m, d)),
        _ => Err(Error::shape(
            "quantize",
            format!(
                "latents {:?} vs codebook M={} n_z={}",
                z.shape(),
                codebook.components(),
                codebook.dim()
            ),
        )),
    }
}

pub fn quantize(z: &Tensor, codebook: &Codebook) -> Result<QuantizeResult> {
    let (b, m, d) = check_latents(z, codebook)?;
    let indices = nearest_codewords(z.data(), &codebook.atoms)?;
    let data = indices
        .iter()
        .flat_map(|&i| codebook.atoms.row(i).to_vec())
        .collect();
    let quantized = Tensor::new(vec![b, m, d], data)?;
    Ok(QuantizeResult {
        indices,
        batch: b,
        components: m,
        st_output: quantized.clone(),
        quantized,
    })
}

/// Quantizer nodes on a tape.
#[derive(Clone, Debug)]
pub struct TapeQuantized {
    pub indices: Vec<usize>,
    /// Gathered codewords; gradients flow to the atoms.
    pub quantized: NodeId,
    /// Straight-through output: gradients are copied to the latents, none reach the atoms.
    pub st_output: NodeId,
}

/// Records quantization of a `B×M×n_z` latent node against a `K×n_z` atom node.
pub fn quantize_on_tape(tape: &mut Tape, z: NodeId, atoms: NodeId) -> Result<TapeQuantized> {
    let shape = tape.value(z).shape().to_vec();
    let [b, m, d] = shape[..] else {
        return Err(Error::shape("quantize", format!("latents {shape:?}")));
    };
    if tape.value(atoms).shape().get(1) != Some(&d) {
        return Err(Error::shape(
            "quantize",
            format!("latents {shape:?} vs atoms {:?}", tape.value(atoms).shape()),
        ));
    }
    let indices = nearest_codewords(tape.value(z).data(), tape.value(atoms))?;
    let gathered = tape.index_select(atoms, indices.clone())?;
    let quantized = tape.reshape(gathered, &[b, m, d])?;
    let st_output = tape.straight_through(z, quantized)?;
    Ok(TapeQuantized {
        indices,
        quantized,
        st_output,
    })
}

/// VQ-VAE codebook and commitment terms `(d_z(sg(z), z̄), d_z(z, sg(z̄)))`, each the mean over
/// batch and components of the squared distance.
pub fn vqvae_codebook_terms(
    tape: &mut Tape,
    z: NodeId,
    quantized: NodeId,
) -> Result<(NodeId, NodeId)> {
    let shape = tape.value(z).shape().to_vec();
    let pairs: usize = shape[..shape.len() - 1].iter().product();
    let zd = tape.detach(z)?;
    let qd = tape.detach(quantized)?;
    let mut term = |a: NodeId, b: NodeId| -> Result<NodeId> {
        let diff = tape.sub(a, b)?;
        let sq = tape.square(diff)?;
        let s = tape.sum(sq)?;
        tape.scale(s, 1.0 / pairs as f64)
    };
    let codebook_loss = term(zd, quantized)?;
    let commitment_loss = term(z, qd)?;
    Ok((codebook_loss, commitment_loss))
}
