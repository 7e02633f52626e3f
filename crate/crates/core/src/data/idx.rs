//! Big-endian IDX files as used by MNIST: a four-byte magic (`0x00 0x00 type ndims`), one
//! u32 extent per dimension, then the raw bytes.

use std::fs;
use std::path::Path;

use super::dataset::{Dataset, DatasetMeta};
use crate::diffcore::Tensor;
use crate::{Error, Result};

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

struct IdxFile {
    dims: Vec<u32>,
    body: Vec<u8>,
}

fn read_idx(path: &Path, magic: u32, limit: Option<usize>) -> Result<IdxFile> {
    let bytes = fs::read(path)?;
    let name = || path.to_path_buf();
    let truncated = |needed: usize| Error::Truncated {
        path: name(),
        needed,
        actual: bytes.len(),
    };
    if bytes.len() < 4 {
        return Err(truncated(4));
    }
    let found = u32::from_be_bytes(bytes[..4].try_into().expect("4 bytes"));
    if found != magic {
        return Err(Error::BadMagic {
            path: name(),
            expected: magic,
            found,
        });
    }
    let ndims = (magic & 0xff) as usize;
    let header = 4 + 4 * ndims;
    if bytes.len() < header {
        return Err(truncated(header));
    }
    let mut dims: Vec<u32> = bytes[4..header]
        .chunks(4)
        .map(|c| u32::from_be_bytes(c.try_into().expect("4 bytes")))
        .collect();
    if let Some(limit) = limit {
        dims[0] = dims[0].min(u32::try_from(limit).unwrap_or(u32::MAX));
    }
    let count = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d as usize))
        .and_then(|n| n.checked_add(header))
        .ok_or_else(|| Error::DimensionOverflow {
            path: name(),
            dims: dims.clone(),
        })?;
    if bytes.len() < count {
        return Err(truncated(count));
    }
    Ok(IdxFile {
        body: bytes[header..count].to_vec(),
        dims,
    })
}

/// Loads an image file (and optionally its labels), keeping at most `limit` records.
/// Pixels are divided by 255 and each image is flattened row-major.
pub fn load_idx(images: &Path, labels: Option<&Path>, limit: Option<usize>) -> Result<Dataset> {
    let img = read_idx(images, IMAGES_MAGIC, limit)?;
    let (n, rows, cols) = (
        img.dims[0] as usize,
        img.dims[1] as usize,
        img.dims[2] as usize,
    );
    if n == 0 || rows * cols == 0 {
        return Err(Error::EmptyDataset);
    }
    let labels = match labels {
        Some(p) => {
            let lab = read_idx(p, LABELS_MAGIC, limit)?;
            if lab.dims[0] as usize != n {
                return Err(Error::CountMismatch {
                    images: n,
                    labels: lab.dims[0] as usize,
                });
            }
            Some(lab.body.into_iter().map(u32::from).collect())
        }
        None => None,
    };
    let data = img.body.iter().map(|&b| b as f64 / 255.0).collect();
    let name = images
        .file_name()
        .map_or_else(|| "idx".to_string(), |s| s.to_string_lossy().into_owned());
    Dataset::new(
        Tensor::new(vec![n, rows * cols], data)?,
        labels,
        DatasetMeta {
            name,
            n_x: rows * cols,
            peak: 1.0,
            seed: None,
            image_dims: Some((rows, cols)),
        },
    )
}

/// Writes an image dataset back out, mapping each value `v` to the byte `round(255·v)`.
/// Labels are written when the dataset has them and a path is given.
pub fn write_idx(dataset: &Dataset, images: &Path, labels: Option<&Path>) -> Result<()> {
    let (rows, cols) = dataset.meta().image_dims.ok_or_else(|| {
        Error::InvalidArgument("write_idx needs a dataset with image dimensions".into())
    })?;
    let n = dataset.len() as u32;
    let mut out = IMAGES_MAGIC.to_be_bytes().to_vec();
    for d in [n, rows as u32, cols as u32] {
        out.extend(d.to_be_bytes());
    }
    out.extend(
        dataset
            .samples()
            .data()
            .iter()
            .map(|&v| (v * 255.0).round().clamp(0.0, 255.0) as u8),
    );
    fs::write(images, out)?;
    if let (Some(path), Some(lab)) = (labels, dataset.labels()) {
        let mut out = LABELS_MAGIC.to_be_bytes().to_vec();
        out.extend(n.to_be_bytes());
        out.extend(lab.iter().map(|&l| l as u8));
        fs::write(path, out)?;
    }
    Ok(())
}
