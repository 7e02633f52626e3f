use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::dataset::{Dataset, DatasetMeta};
use crate::diffcore::Tensor;
use crate::{Error, Result};

/// Cluster centers: evenly spaced on the unit circle for `n_x = 2`, otherwise random corners
/// of `{−1, 1}^{n_x}` (distinct while there are enough corners).
pub fn mixture_centers(n_clusters: usize, n_x: usize, rng: &mut impl Rng) -> Vec<Vec<f64>> {
    if n_x == 2 {
        return (0..n_clusters)
            .map(|c| {
                let t = TAU * c as f64 / n_clusters as f64;
                vec![t.cos(), t.sin()]
            })
            .collect();
    }
    let distinct = n_x < 64 && (1u64 << n_x) >= n_clusters as u64;
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(n_clusters);
    while centers.len() < n_clusters {
        let c: Vec<f64> = (0..n_x)
            .map(|_| if rng.random_bool(0.5) { 1.0 } else { -1.0 })
            .collect();
        if !distinct || !centers.contains(&c) {
            centers.push(c);
        }
    }
    centers
}

/// Isotropic Gaussian clusters with standard deviation `spread`, stored cluster by cluster and
/// labelled with the cluster index.
pub fn gen_gaussian_mixture(
    n_clusters: usize,
    n_x: usize,
    points_per_cluster: usize,
    spread: f64,
    seed: u64,
) -> Result<Dataset> {
    if n_clusters == 0 || n_x == 0 || points_per_cluster == 0 {
        return Err(Error::InvalidArgument(
            "mixture needs positive cluster count, dimension and cluster size".into(),
        ));
    }
    if !(spread >= 0.0) || !spread.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "spread must be ≥ 0, got {spread}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers = mixture_centers(n_clusters, n_x, &mut rng);
    let noise = Normal::new(0.0, spread).expect("finite spread");
    let mut data = Vec::with_capacity(n_clusters * points_per_cluster * n_x);
    let mut labels = Vec::with_capacity(n_clusters * points_per_cluster);
    for (c, center) in centers.iter().enumerate() {
        for _ in 0..points_per_cluster {
            data.extend(center.iter().map(|&v| v + noise.sample(&mut rng)));
            labels.push(c as u32);
        }
    }
    let (lo, hi) = data
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| {
            (l.min(v), h.max(v))
        });
    let peak = if hi > lo { hi - lo } else { 1.0 };
    let n = labels.len();
    Dataset::new(
        Tensor::new(vec![n, n_x], data)?,
        Some(labels),
        DatasetMeta {
            name: format!("gaussian-mixture-{n_clusters}"),
            n_x,
            peak,
            seed: Some(seed),
            image_dims: None,
        },
    )
}
