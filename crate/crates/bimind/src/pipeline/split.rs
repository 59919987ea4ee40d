//! Deterministic stratified train/validation/test splitting.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::N_CLASSES;
use crate::text::Instance;

/// The three split portions, in train/validation/test order.
#[derive(Debug, Clone)]
pub struct Split {
    pub train: Vec<Instance>,
    pub val: Vec<Instance>,
    pub test: Vec<Instance>,
}

/// Largest-remainder apportionment of `total` into parts proportional to
/// `weights`; ties go to the earlier slot.
fn largest_remainder(total: usize, weights: &[f64]) -> Vec<usize> {
    let weight_sum: f64 = weights.iter().sum();
    let quotas: Vec<f64> = weights
        .iter()
        .map(|w| total as f64 * w / weight_sum)
        .collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = quotas[a] - quotas[a].floor();
        let fb = quotas[b] - quotas[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    for &slot in order.iter().take(total - assigned) {
        counts[slot] += 1;
    }
    counts
}

/// Shuffle with the run seed, then deal each class's instances into the
/// three splits so that split sizes follow the ratios exactly and every
/// split's label mix stays within one instance of the global mix.
pub fn stratified_split(data: &[Instance], ratios: [f64; 3], seed: u64) -> Result<Split> {
    if data.is_empty() {
        return Err(Error::EmptyDataset("split input".into()));
    }
    let sum: f64 = ratios.iter().sum();
    if (sum - 1.0).abs() > 1e-9 || ratios.iter().any(|&r| r < 0.0) {
        return Err(Error::Config(format!("bad split ratios {ratios:?}")));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(&mut rng);

    // Shuffled queues per class.
    let mut queues: Vec<Vec<usize>> = vec![Vec::new(); N_CLASSES];
    for &idx in &order {
        queues[data[idx].label as usize].push(idx);
    }

    // Global split sizes first, then each class fills the remaining
    // capacity proportionally; the final class takes what is left, which
    // keeps both the split sizes and the per-class mix within one of exact.
    let split_sizes = largest_remainder(data.len(), &ratios);
    let mut remaining = split_sizes.clone();
    let mut buckets: Vec<Vec<usize>> = vec![Vec::new(); 3];
    for (class, queue) in queues.iter().enumerate() {
        let counts = if class + 1 == N_CLASSES {
            remaining.clone()
        } else {
            let caps: Vec<f64> = remaining.iter().map(|&c| c as f64).collect();
            largest_remainder(queue.len(), &caps)
        };
        let mut cursor = 0;
        for (slot, &take) in counts.iter().enumerate() {
            buckets[slot].extend(&queue[cursor..cursor + take]);
            remaining[slot] -= take;
            cursor += take;
        }
    }

    for (which, (bucket, &size)) in buckets.iter().zip(&split_sizes).enumerate() {
        debug_assert_eq!(bucket.len(), size);
        if bucket.is_empty() {
            let name = ["train", "validation", "test"][which];
            return Err(Error::EmptySplit { which: name });
        }
    }

    // Mix the classes back together within each split, deterministically.
    let mut take = |mut bucket: Vec<usize>| {
        bucket.shuffle(&mut rng);
        bucket.into_iter().map(|i| data[i].clone()).collect()
    };
    let test = take(buckets.pop().expect("three buckets"));
    let val = take(buckets.pop().expect("two buckets"));
    let train = take(buckets.pop().expect("one bucket"));
    Ok(Split { train, val, test })
}
