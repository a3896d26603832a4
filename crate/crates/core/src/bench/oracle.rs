//! Linear-scan answers, the ground truth the benchmark scores against.

use std::collections::HashSet;

use crate::geom::{distance, Point};
use crate::model::{CaseRecord, Hits, Neighbor, Query, RecordId};

/// The `k` nearest records under the (distance, id) order.
pub fn linear_knn(records: &[CaseRecord], center: &Point, k: usize) -> Vec<Neighbor> {
    let mut all: Vec<Neighbor> = records
        .iter()
        .map(|r| Neighbor {
            id: r.id,
            distance: distance(center, &r.position).expect("matching dimensions"),
        })
        .collect();
    all.sort_by(Neighbor::rank_cmp);
    all.truncate(k);
    all
}

/// Ids of records within `radius` (inclusive), ascending.
pub fn linear_range(records: &[CaseRecord], center: &Point, radius: f64) -> Vec<RecordId> {
    let mut ids: Vec<RecordId> = records
        .iter()
        .filter(|r| distance(center, &r.position).expect("matching dimensions") <= radius)
        .map(|r| r.id)
        .collect();
    ids.sort_unstable();
    ids
}

pub fn linear_answer(records: &[CaseRecord], query: &Query) -> Hits {
    match query {
        Query::Knn { center, k } => Hits::Knn(linear_knn(records, center, *k)),
        Query::Range { center, radius } => Hits::Range(linear_range(records, center, *radius)),
    }
}

/// `|answer ∩ truth| / |truth|`, or 1.0 when the truth is empty.
pub fn accuracy(answer: &Hits, truth: &Hits) -> (usize, usize) {
    let truth_ids = truth.ids();
    let got: HashSet<RecordId> = answer.ids().into_iter().collect();
    let matched = truth_ids.iter().filter(|id| got.contains(id)).count();
    (matched, truth_ids.len())
}
