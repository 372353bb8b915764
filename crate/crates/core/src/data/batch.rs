use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::ImageBatch;

/// Mini-batches over a dataset in an order shuffled by `shuffle_seed`
/// (`None` keeps the stored order). The last batch may be short.
pub struct BatchIter<'a> {
    data: &'a ImageBatch,
    order: Vec<usize>,
    batch_size: usize,
    pos: usize,
}

impl BatchIter<'_> {
    /// Dataset indices in visiting order.
    pub fn order(&self) -> &[usize] {
        &self.order
    }
}

pub fn batch_iter(data: &ImageBatch, batch_size: usize, shuffle_seed: Option<u64>) -> BatchIter<'_> {
    assert!(batch_size > 0, "batch size must be positive");
    let mut order: Vec<usize> = (0..data.len()).collect();
    if let Some(seed) = shuffle_seed {
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    }
    BatchIter {
        data,
        order,
        batch_size,
        pos: 0,
    }
}

impl Iterator for BatchIter<'_> {
    type Item = ImageBatch;

    fn next(&mut self) -> Option<ImageBatch> {
        if self.pos >= self.order.len() {
            return None;
        }
        let end = (self.pos + self.batch_size).min(self.order.len());
        let b = self.data.select(&self.order[self.pos..end]);
        self.pos = end;
        Some(b)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let n = (self.order.len() - self.pos).div_ceil(self.batch_size);
        (n, Some(n))
    }
}

impl ExactSizeIterator for BatchIter<'_> {}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    fn items(n: usize) -> ImageBatch {
        ImageBatch::with_prefix(Tensor::from_fn(&[n, 1, 1, 1], |i| i as f32), "i").unwrap()
    }

    #[test]
    fn short_final_batch() {
        let d = items(10);
        let sizes: Vec<usize> = batch_iter(&d, 3, Some(1)).map(|b| b.len()).collect();
        assert_eq!(sizes, vec![3, 3, 3, 1]);
        assert_eq!(batch_iter(&d, 3, None).len(), 4);
    }

    #[test]
    fn same_seed_same_order_and_permutation() {
        let d = items(50);
        let a: Vec<f32> = batch_iter(&d, 7, Some(5)).flat_map(|b| b.data.into_data()).collect();
        let b: Vec<f32> = batch_iter(&d, 7, Some(5)).flat_map(|b| b.data.into_data()).collect();
        assert_eq!(a, b);
        let c: Vec<f32> = batch_iter(&d, 7, Some(6)).flat_map(|b| b.data.into_data()).collect();
        assert_ne!(a, c);
        let mut sorted = a.clone();
        sorted.sort_by(f32::total_cmp);
        assert_eq!(sorted, (0..50).map(|i| i as f32).collect::<Vec<_>>());
    }

    #[test]
    fn unshuffled_keeps_order_and_ids() {
        let d = items(4);
        let first = batch_iter(&d, 3, None).next().unwrap();
        assert_eq!(first.ids, vec!["i:0", "i:1", "i:2"]);
    }
}
