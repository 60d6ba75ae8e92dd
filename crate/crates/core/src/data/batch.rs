//! Batch composition.

use super::ClipRecord;
use crate::error::{Error, Result};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BatchStrategy {
    /// Seeded shuffle, fixed-size chunks.
    Shuffle,
    /// Force at least one same-class pair into every batch (while some class
    /// still has two records left), stressing the false-negative machinery.
    ClassCollision,
}

/// Indices into the dataset record list; positives pair by position.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Batch {
    pub indices: Vec<usize>,
}

/// Split a dataset into batches of exactly `b` records (the final partial
/// batch is dropped so the effective batch size stays constant).
pub fn make_batches(
    records: &[ClipRecord],
    b: usize,
    seed: u64,
    strategy: BatchStrategy,
) -> Result<Vec<Batch>> {
    if b == 0 {
        return Err(Error::validation("batch size must be positive"));
    }
    if b > records.len() {
        return Err(Error::validation(format!(
            "batch size {b} exceeds dataset size {}",
            records.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..records.len()).collect();
    order.shuffle(&mut rng);

    match strategy {
        BatchStrategy::Shuffle => Ok(order
            .chunks_exact(b)
            .map(|c| Batch { indices: c.to_vec() })
            .collect()),
        BatchStrategy::ClassCollision => {
            if let Some(bad) = order.iter().find(|&&i| records[i].label.is_none()) {
                return Err(Error::validation(format!(
                    "class-collision batching needs labels; record {} has none",
                    records[*bad].id
                )));
            }
            let mut remaining = order;
            let mut batches = Vec::new();
            while remaining.len() >= b {
                let mut batch = Vec::with_capacity(b);
                // classes that can still collide, in ascending label order
                let mut counts = std::collections::BTreeMap::<u8, usize>::new();
                for &i in &remaining {
                    *counts.entry(records[i].label.unwrap()).or_default() += 1;
                }
                let collidable: Vec<u8> = counts
                    .iter()
                    .filter(|&(_, &c)| c >= 2)
                    .map(|(&l, _)| l)
                    .collect();
                if let Some(&class) = pick(&collidable, &mut rng) {
                    let mut taken = 0;
                    remaining.retain(|&i| {
                        if taken < 2 && records[i].label == Some(class) {
                            batch.push(i);
                            taken += 1;
                            false
                        } else {
                            true
                        }
                    });
                }
                let fill = b - batch.len();
                batch.extend(remaining.drain(..fill));
                batches.push(Batch { indices: batch });
            }
            Ok(batches)
        }
    }
}

fn pick<'a, T>(items: &'a [T], rng: &mut ChaCha8Rng) -> Option<&'a T> {
    if items.is_empty() {
        None
    } else {
        Some(&items[rng.random_range(0..items.len())])
    }
}
