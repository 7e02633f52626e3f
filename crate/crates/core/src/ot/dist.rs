use crate::diffcore::{pairwise_sq_dist, Tensor};
use crate::{Error, Result};

/// Finitely supported probability distribution.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteDist {
    weights: Vec<f64>,
    atoms: Tensor,
}

impl DiscreteDist {
    /// `atoms` is `n×d`; `weights` must be a probability vector of length `n`.
    pub fn new(weights: Vec<f64>, atoms: Tensor) -> Result<Self> {
        if atoms.shape().len() != 2 || atoms.shape()[0] != weights.len() {
            return Err(Error::shape(
                "discrete_dist",
                format!("{} weights for atoms {:?}", weights.len(), atoms.shape()),
            ));
        }
        check_simplex(&weights)?;
        Ok(Self { weights, atoms })
    }

    pub fn uniform(atoms: Tensor) -> Result<Self> {
        let n = atoms.rows();
        Self::new(vec![1.0 / n as f64; n], atoms)
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn atoms(&self) -> &Tensor {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn support_dim(&self) -> usize {
        self.atoms.shape()[1]
    }
}

pub(crate) fn check_simplex(w: &[f64]) -> Result<()> {
    if w.is_empty() {
        return Err(Error::InvalidArgument("empty weight vector".into()));
    }
    if w.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "weights must be finite and ≥ 0: {w:?}"
        )));
    }
    let total: f64 = w.iter().sum();
    if (total - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidArgument(format!(
            "weights sum to {total}, not 1"
        )));
    }
    Ok(())
}

/// Ground cost ρ_z between latents and codewords.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum GroundCost {
    #[default]
    SquaredEuclidean,
}

impl GroundCost {
    pub fn matrix(self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        match self {
            GroundCost::SquaredEuclidean => {
                if a.shape().len() != 2 || b.shape().len() != 2 || a.shape()[1] != b.shape()[1] {
                    return Err(Error::shape(
                        "ground_cost",
                        format!("{:?} vs {:?}", a.shape(), b.shape()),
                    ));
                }
                let d = a.shape()[1];
                Tensor::new(
                    vec![a.rows(), b.rows()],
                    pairwise_sq_dist(a.data(), b.data(), d),
                )
            }
        }
    }
}

/// Squared Euclidean cost between the atoms of two distributions.
pub fn sq_euclidean_cost(mu: &DiscreteDist, nu: &DiscreteDist) -> Result<Tensor> {
    GroundCost::SquaredEuclidean.matrix(mu.atoms(), nu.atoms())
}

/// A coupling between two finite distributions.
#[derive(Clone, Debug, PartialEq)]
pub struct TransportPlan {
    pub matrix: Tensor,
    pub value: f64,
    pub row_marginal: Vec<f64>,
    pub col_marginal: Vec<f64>,
}

impl TransportPlan {
    pub fn from_matrix(matrix: Tensor, cost: &Tensor) -> Result<Self> {
        if matrix.shape() != cost.shape() || matrix.shape().len() != 2 {
            return Err(Error::shape(
                "transport_plan",
                format!("{:?} vs cost {:?}", matrix.shape(), cost.shape()),
            ));
        }
        let (n, k) = (matrix.shape()[0], matrix.shape()[1]);
        let mut row = vec![0.0; n];
        let mut col = vec![0.0; k];
        let mut value = 0.0;
        for i in 0..n {
            for j in 0..k {
                let p = matrix.at2(i, j);
                row[i] += p;
                col[j] += p;
                value += p * cost.at2(i, j);
            }
        }
        Ok(Self {
            matrix,
            value,
            row_marginal: row,
            col_marginal: col,
        })
    }

    pub fn rows(&self) -> usize {
        self.matrix.shape()[0]
    }

    pub fn cols(&self) -> usize {
        self.matrix.shape()[1]
    }

    /// Largest absolute deviation of either marginal from `(a, b)`.
    pub fn marginal_error(&self, a: &[f64], b: &[f64]) -> f64 {
        let r = self.row_marginal.iter().zip(a).map(|(x, y)| (x - y).abs());
        let c = self.col_marginal.iter().zip(b).map(|(x, y)| (x - y).abs());
        r.chain(c).fold(0.0, f64::max)
    }

    /// The assignment encoded by a plan with exactly one positive entry per row.
    pub fn assignment(&self) -> Option<Vec<usize>> {
        (0..self.rows())
            .map(|i| {
                let mut nz = (0..self.cols()).filter(|&j| self.matrix.at2(i, j) > 0.0);
                match (nz.next(), nz.next()) {
                    (Some(j), None) => Some(j),
                    _ => None,
                }
            })
            .collect()
    }
}
