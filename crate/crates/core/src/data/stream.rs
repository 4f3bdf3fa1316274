use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::Dataset;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// A materialized minibatch with the dataset rows it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub inputs: Tensor,
    pub labels: Tensor,
    pub indices: Vec<usize>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// The whole dataset as one batch, in order.
    pub fn full(dataset: &Dataset) -> Batch {
        Batch {
            inputs: dataset.inputs().clone(),
            labels: dataset.labels().clone(),
            indices: (0..dataset.len()).collect(),
        }
    }
}

/// Shuffled drop-last minibatches over a dataset.
///
/// Epoch `e` visits the permutation drawn from ChaCha stream `e` of the seed,
/// so the batch sequence depends only on `(seed, N, n)`. Batches are exactly
/// `n` samples; a short tail is skipped for that epoch.
#[derive(Debug, Clone)]
pub struct BatchStream<'a> {
    dataset: &'a Dataset,
    batch_size: usize,
    seed: u64,
    epoch: u64,
    cursor: usize,
    order: Vec<usize>,
}

fn permutation(n: usize, seed: u64, epoch: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    order
}

impl<'a> BatchStream<'a> {
    pub fn new(dataset: &'a Dataset, batch_size: usize, seed: u64) -> Result<Self> {
        if batch_size == 0 || batch_size > dataset.len() {
            return Err(Error::InvalidArgument(format!(
                "batch size {batch_size} must be in 1..={} for dataset {}",
                dataset.len(),
                dataset.name
            )));
        }
        Ok(BatchStream {
            dataset,
            batch_size,
            seed,
            epoch: 0,
            cursor: 0,
            order: permutation(dataset.len(), seed, 0),
        })
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size
    }

    pub fn dataset(&self) -> &'a Dataset {
        self.dataset
    }

    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    pub fn batches_per_epoch(&self) -> usize {
        self.dataset.len() / self.batch_size
    }

    fn materialize(&self, indices: Vec<usize>) -> Batch {
        Batch {
            inputs: self.dataset.inputs().select_rows(&indices),
            labels: self.dataset.labels().select_rows(&indices),
            indices,
        }
    }

    pub fn next_indices(&mut self) -> Vec<usize> {
        if self.cursor + self.batch_size > self.order.len() {
            self.epoch += 1;
            self.cursor = 0;
            self.order = permutation(self.dataset.len(), self.seed, self.epoch);
        }
        let idx = self.order[self.cursor..self.cursor + self.batch_size].to_vec();
        self.cursor += self.batch_size;
        idx
    }

    pub fn next_batch(&mut self) -> Batch {
        let idx = self.next_indices();
        self.materialize(idx)
    }

    /// The batch this stream will emit next, without consuming it, with any
    /// row in `exclude` replaced by the following rows of the upcoming order.
    ///
    /// Inside an epoch the next batch is already disjoint from the current
    /// one; the replacement only matters across a reshuffle. Needs
    /// `N >= n + exclude.len()`.
    pub fn peek_disjoint(&self, exclude: &[usize]) -> Result<Batch> {
        let n = self.batch_size;
        if self.dataset.len() < n + exclude.len() {
            return Err(Error::InvalidArgument(format!(
                "dataset {} has {} samples, too few for a disjoint batch of {n} next to {} excluded",
                self.dataset.name,
                self.dataset.len(),
                exclude.len()
            )));
        }
        let (epoch, cursor) = if self.cursor + n > self.order.len() {
            (self.epoch + 1, 0)
        } else {
            (self.epoch, self.cursor)
        };
        let current = if epoch == self.epoch {
            self.order.clone()
        } else {
            permutation(self.dataset.len(), self.seed, epoch)
        };
        let following = permutation(self.dataset.len(), self.seed, epoch + 1);
        let mut picked = Vec::with_capacity(n);
        for &i in current[cursor..].iter().chain(&following) {
            if picked.len() == n {
                break;
            }
            if !exclude.contains(&i) && !picked.contains(&i) {
                picked.push(i);
            }
        }
        Ok(self.materialize(picked))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn dataset(n: usize) -> Dataset {
        let x = Tensor::new(vec![n, 1], (0..n).map(|i| i as f64).collect()).unwrap();
        let y = Tensor::new(vec![n], vec![0.0; n]).unwrap();
        Dataset::new("d", x, y, 1).unwrap()
    }

    #[test]
    fn drop_last_then_reshuffle() {
        let d = dataset(10);
        let mut s = BatchStream::new(&d, 3, 5).unwrap();
        assert_eq!(s.batches_per_epoch(), 3);
        let epoch0: Vec<usize> = (0..3).flat_map(|_| s.next_indices()).collect();
        let mut missing: Vec<usize> = (0..10).filter(|i| !epoch0.contains(i)).collect();
        assert_eq!(missing.len(), 1);
        let dropped = missing.pop().unwrap();
        // the dropped sample comes back in a later epoch
        let later: Vec<usize> = (0..30).flat_map(|_| s.next_indices()).collect();
        assert!(later.contains(&dropped));
        assert!(s.epoch() >= 1);
    }

    #[test]
    fn equal_seeds_equal_sequences() {
        let d = dataset(17);
        let mut a = BatchStream::new(&d, 4, 1).unwrap();
        let mut b = BatchStream::new(&d, 4, 1).unwrap();
        for _ in 0..20 {
            assert_eq!(a.next_batch(), b.next_batch());
        }
        let mut c = BatchStream::new(&d, 4, 2).unwrap();
        let diff = (0..5).any(|_| a.next_indices() != c.next_indices());
        assert!(diff);
    }

    #[test]
    fn batch_larger_than_dataset_rejected() {
        assert!(BatchStream::new(&dataset(3), 4, 0).is_err());
        assert!(BatchStream::new(&dataset(3), 0, 0).is_err());
    }

    #[test]
    fn peek_is_next_batch_within_an_epoch() {
        let d = dataset(12);
        let mut s = BatchStream::new(&d, 3, 0).unwrap();
        let cur = s.next_batch();
        let peeked = s.peek_disjoint(&cur.indices).unwrap();
        assert_eq!(peeked, s.next_batch());
    }

    proptest! {
        #[test]
        fn every_epoch_is_a_partial_permutation(n in 2usize..40, b in 1usize..8, seed in any::<u64>()) {
            prop_assume!(b <= n);
            let d = dataset(n);
            let mut s = BatchStream::new(&d, b, seed).unwrap();
            for _ in 0..3 {
                let mut seen: Vec<usize> = (0..s.batches_per_epoch()).flat_map(|_| s.next_indices()).collect();
                prop_assert_eq!(seen.len(), (n / b) * b);
                seen.sort_unstable();
                seen.dedup();
                prop_assert_eq!(seen.len(), (n / b) * b);
                prop_assert!(seen.iter().all(|&i| i < n));
            }
        }

        #[test]
        fn peeked_batch_is_disjoint_from_current(n in 4usize..30, b in 1usize..6, steps in 0usize..20, seed in any::<u64>()) {
            prop_assume!(2 * b <= n);
            let d = dataset(n);
            let mut s = BatchStream::new(&d, b, seed).unwrap();
            for _ in 0..steps {
                s.next_indices();
            }
            let cur = s.next_indices();
            let val = s.peek_disjoint(&cur).unwrap();
            prop_assert_eq!(val.len(), b);
            prop_assert!(val.indices.iter().all(|i| !cur.contains(i)));
            let mut v = val.indices.clone();
            v.sort_unstable();
            v.dedup();
            prop_assert_eq!(v.len(), b);
        }
    }
}
