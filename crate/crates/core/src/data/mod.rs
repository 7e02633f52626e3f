//! Datasets: seeded synthetic mixtures, IDX image files, batching.

mod batch;
mod dataset;
mod idx;
mod synthetic;

pub use batch::{batches, epoch_indices, BatchSampler};
pub use dataset::{Dataset, DatasetMeta};
pub use idx::{load_idx, write_idx, IMAGES_MAGIC, LABELS_MAGIC};
pub use synthetic::{gen_gaussian_mixture, mixture_centers};
