use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dataset::Dataset;
use crate::diffcore::Tensor;
use crate::{Error, Result};

fn check_batch(dataset: &Dataset, batch: usize) -> Result<()> {
    if batch == 0 || batch > dataset.len() {
        return Err(Error::BatchTooLarge {
            batch,
            len: dataset.len(),
        });
    }
    Ok(())
}

/// Index chunks for one epoch: a seeded permutation (or dataset order) cut into runs of
/// `batch`, dropping the incomplete tail.
pub fn epoch_indices(len: usize, batch: usize, seed: u64, shuffle: bool) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..len).collect();
    if shuffle {
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    }
    order.chunks_exact(batch).map(<[usize]>::to_vec).collect()
}

/// One epoch of `B×n_x` batches.
pub fn batches(dataset: &Dataset, batch: usize, seed: u64, shuffle: bool) -> Result<Vec<Tensor>> {
    check_batch(dataset, batch)?;
    epoch_indices(dataset.len(), batch, seed, shuffle)
        .iter()
        .map(|idx| dataset.gather(idx))
        .collect()
}

/// Endless stream of shuffled epochs whose state can be checkpointed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchSampler {
    batch: usize,
    rng: ChaCha8Rng,
    order: Vec<usize>,
    cursor: usize,
    pub epoch: u64,
}

impl BatchSampler {
    pub fn new(dataset: &Dataset, batch: usize, seed: u64) -> Result<Self> {
        check_batch(dataset, batch)?;
        let mut s = Self {
            batch,
            rng: ChaCha8Rng::seed_from_u64(seed),
            order: (0..dataset.len()).collect(),
            cursor: 0,
            epoch: 0,
        };
        s.order.shuffle(&mut s.rng);
        Ok(s)
    }

    pub fn next_indices(&mut self) -> Vec<usize> {
        if self.cursor + self.batch > self.order.len() {
            self.order.sort_unstable();
            self.order.shuffle(&mut self.rng);
            self.cursor = 0;
            self.epoch += 1;
        }
        let idx = self.order[self.cursor..self.cursor + self.batch].to_vec();
        self.cursor += self.batch;
        idx
    }

    pub fn next_batch(&mut self, dataset: &Dataset) -> Result<Tensor> {
        if dataset.len() != self.order.len() {
            return Err(Error::InvalidArgument(format!(
                "sampler built for {} samples, dataset has {}",
                self.order.len(),
                dataset.len()
            )));
        }
        dataset.gather(&self.next_indices())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::gen_gaussian_mixture;

    #[test]
    fn epoch_drops_tail() {
        let chunks = epoch_indices(10, 3, 1, true);
        assert_eq!(chunks.len(), 3);
        let mut seen: Vec<usize> = chunks.concat();
        seen.sort_unstable();
        seen.dedup();
        assert_eq!(seen.len(), 9);
    }

    #[test]
    fn sampler_walks_whole_epochs() {
        let ds = gen_gaussian_mixture(2, 2, 6, 0.1, 0).unwrap();
        let mut s = BatchSampler::new(&ds, 4, 9).unwrap();
        let mut first: Vec<usize> = (0..3).flat_map(|_| s.next_indices()).collect();
        first.sort_unstable();
        assert_eq!(first, (0..12).collect::<Vec<_>>());
        assert_eq!(s.epoch, 0);
        s.next_indices();
        assert_eq!(s.epoch, 1);
    }

    #[test]
    fn sampler_is_seeded() {
        let ds = gen_gaussian_mixture(2, 2, 6, 0.1, 0).unwrap();
        let mut a = BatchSampler::new(&ds, 5, 3).unwrap();
        let mut b = a.clone();
        for _ in 0..7 {
            assert_eq!(a.next_batch(&ds).unwrap(), b.next_batch(&ds).unwrap());
        }
        assert!(BatchSampler::new(&ds, 13, 3).is_err());
    }
}
