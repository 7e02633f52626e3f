use serde::{Deserialize, Serialize};

use crate::diffcore::Tensor;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub name: String,
    pub n_x: usize,
    /// Data range used as the PSNR peak.
    pub peak: f64,
    /// Generator seed, when the data is synthetic.
    pub seed: Option<u64>,
    /// `(rows, cols)` for image data.
    pub image_dims: Option<(usize, usize)>,
}

/// `N×n_x` samples with optional integer labels.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    samples: Tensor,
    labels: Option<Vec<u32>>,
    meta: DatasetMeta,
}

impl Dataset {
    pub fn new(samples: Tensor, labels: Option<Vec<u32>>, meta: DatasetMeta) -> Result<Self> {
        if samples.shape().len() != 2 || samples.shape()[1] != meta.n_x {
            return Err(Error::shape(
                "dataset",
                format!("samples {:?} with n_x = {}", samples.shape(), meta.n_x),
            ));
        }
        if !samples.is_finite() {
            return Err(Error::NonFinite("dataset samples"));
        }
        if let Some(l) = &labels {
            if l.len() != samples.rows() {
                return Err(Error::CountMismatch {
                    images: samples.rows(),
                    labels: l.len(),
                });
            }
        }
        Ok(Self {
            samples,
            labels,
            meta,
        })
    }

    pub fn samples(&self) -> &Tensor {
        &self.samples
    }

    pub fn labels(&self) -> Option<&[u32]> {
        self.labels.as_deref()
    }

    pub fn meta(&self) -> &DatasetMeta {
        &self.meta
    }

    pub fn len(&self) -> usize {
        self.samples.rows()
    }

    /// Always false: construction rejects empty sample sets.
    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn n_x(&self) -> usize {
        self.meta.n_x
    }

    pub fn sample(&self, i: usize) -> &[f64] {
        self.samples.row(i)
    }

    /// Stacks the given rows into a `len×n_x` tensor.
    pub fn gather(&self, indices: &[usize]) -> Result<Tensor> {
        let mut data = Vec::with_capacity(indices.len() * self.n_x());
        for &i in indices {
            if i >= self.len() {
                return Err(Error::IndexOutOfRange {
                    index: i,
                    size: self.len(),
                });
            }
            data.extend_from_slice(self.sample(i));
        }
        Tensor::new(vec![indices.len(), self.n_x()], data)
    }
}
