use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::model::{Neighbor, RecordId};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MergeError {
    #[error("partial {index} is not sorted")]
    UnsortedPartial { index: usize },
    #[error("partial {index} holds {len} neighbors, more than k = {k}")]
    OversizedPartial { index: usize, len: usize, k: usize },
}

struct Head {
    n: Neighbor,
    partial: usize,
    pos: usize,
}

impl PartialEq for Head {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Head {}

impl PartialOrd for Head {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Head {
    // reversed: BinaryHeap pops the greatest, we want the nearest
    fn cmp(&self, other: &Self) -> Ordering {
        other.n.rank_cmp(&self.n).then(other.partial.cmp(&self.partial))
    }
}

/// The `k` best neighbors across per-shard answers, each of which must be
/// sorted by (distance, id) and hold at most `k` entries.
pub fn merge_knn(partials: &[Vec<Neighbor>], k: usize) -> Result<Vec<Neighbor>, MergeError> {
    for (index, p) in partials.iter().enumerate() {
        if p.len() > k {
            return Err(MergeError::OversizedPartial { index, len: p.len(), k });
        }
        if p.windows(2).any(|w| w[0].rank_cmp(&w[1]) == Ordering::Greater) {
            return Err(MergeError::UnsortedPartial { index });
        }
    }
    let mut heap: BinaryHeap<Head> = partials
        .iter()
        .enumerate()
        .filter_map(|(partial, p)| p.first().map(|&n| Head { n, partial, pos: 0 }))
        .collect();
    let mut out = Vec::with_capacity(k.min(partials.iter().map(Vec::len).sum()));
    while out.len() < k {
        let Some(h) = heap.pop() else { break };
        out.push(h.n);
        if let Some(&n) = partials[h.partial].get(h.pos + 1) {
            heap.push(Head {
                n,
                partial: h.partial,
                pos: h.pos + 1,
            });
        }
    }
    Ok(out)
}

/// Sorted union of ascending id lists, with the number of duplicates dropped.
pub fn merge_range(partials: &[Vec<RecordId>]) -> Result<(Vec<RecordId>, u64), MergeError> {
    for (index, p) in partials.iter().enumerate() {
        if p.windows(2).any(|w| w[0] > w[1]) {
            return Err(MergeError::UnsortedPartial { index });
        }
    }
    let total: usize = partials.iter().map(Vec::len).sum();
    let mut heap: BinaryHeap<std::cmp::Reverse<(RecordId, usize, usize)>> = partials
        .iter()
        .enumerate()
        .filter_map(|(i, p)| p.first().map(|&id| std::cmp::Reverse((id, i, 0))))
        .collect();
    let mut out: Vec<RecordId> = Vec::with_capacity(total);
    while let Some(std::cmp::Reverse((id, i, pos))) = heap.pop() {
        if out.last() != Some(&id) {
            out.push(id);
        }
        if let Some(&next) = partials[i].get(pos + 1) {
            heap.push(std::cmp::Reverse((next, i, pos + 1)));
        }
    }
    let dups = (total - out.len()) as u64;
    Ok((out, dups))
}
