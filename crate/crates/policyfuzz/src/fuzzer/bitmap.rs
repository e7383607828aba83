//! Edge-coverage bitmap: 65536 buckets, each remembering which
//! power-of-two hit classes have been observed for edges hashing into it.

use std::collections::BTreeMap;

use crate::appscript::Edge;
use crate::digest::edge_hash;

pub const BITMAP_BUCKETS: usize = 1 << 16;

/// Hit classes: 1, 2, 3, 4–7, 8–15, 16–31, 32–127, 128+.
fn class_bit(count: u32) -> u8 {
    match count {
        0 => 0,
        1 => 1 << 0,
        2 => 1 << 1,
        3 => 1 << 2,
        4..=7 => 1 << 3,
        8..=15 => 1 << 4,
        16..=31 => 1 << 5,
        32..=127 => 1 << 6,
        _ => 1 << 7,
    }
}

fn bucket_of(edge: Edge) -> usize {
    (edge_hash(edge.0, edge.1) % BITMAP_BUCKETS as u64) as usize
}

pub struct CoverageBitmap {
    classes: Vec<u8>,
}

impl CoverageBitmap {
    pub fn new() -> Self {
        Self {
            classes: vec![0; BITMAP_BUCKETS],
        }
    }

    /// Per-bucket hit counts for one run: multiple edges can share a
    /// bucket, in which case their counts add up.
    fn bucket_counts(metrics: &BTreeMap<Edge, u32>) -> BTreeMap<usize, u32> {
        let mut buckets: BTreeMap<usize, u32> = BTreeMap::new();
        for (edge, count) in metrics {
            *buckets.entry(bucket_of(*edge)).or_insert(0) += *count;
        }
        buckets
    }

    /// True iff some bucket's hit class was never seen before.
    /// Side-effect free; merging is a separate step.
    pub fn is_new_coverage(&self, metrics: &BTreeMap<Edge, u32>) -> bool {
        Self::bucket_counts(metrics)
            .into_iter()
            .any(|(bucket, count)| {
                let bit = class_bit(count);
                bit != 0 && self.classes[bucket] & bit == 0
            })
    }

    pub fn merge(&mut self, metrics: &BTreeMap<Edge, u32>) {
        for (bucket, count) in Self::bucket_counts(metrics) {
            self.classes[bucket] |= class_bit(count);
        }
    }
}

impl Default for CoverageBitmap {
    fn default() -> Self {
        Self::new()
    }
}
