//! Shared fixtures and a brute-force oracle written without the crate's
//! search code, so a bug in the index cannot hide in its own reference.

#![allow(dead_code)]

pub mod arb;

use caseidx::geom::Point;
use caseidx::model::{CaseRecord, Hits, Neighbor, Query, RecordId};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        let d = a[i] - b[i];
        s += d * d;
    }
    s.sqrt()
}

pub fn brute_knn(records: &[CaseRecord], center: &Point, k: usize) -> Vec<Neighbor> {
    let mut v: Vec<(f64, u64)> = records
        .iter()
        .map(|r| (dist(center.coords(), r.position.coords()), r.id.0))
        .collect();
    v.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    v.into_iter()
        .take(k)
        .map(|(d, id)| Neighbor {
            id: RecordId(id),
            distance: d,
        })
        .collect()
}

pub fn brute_range(records: &[CaseRecord], center: &Point, radius: f64) -> Vec<RecordId> {
    let mut v: Vec<RecordId> = records
        .iter()
        .filter(|r| dist(center.coords(), r.position.coords()) <= radius)
        .map(|r| r.id)
        .collect();
    v.sort();
    v
}

pub fn brute(records: &[CaseRecord], q: &Query) -> Hits {
    match q {
        Query::Knn { center, k } => Hits::Knn(brute_knn(records, center, *k)),
        Query::Range { center, radius } => Hits::Range(brute_range(records, center, *radius)),
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `n` uniform 2-d records in `[0, 100)^2` with ids `first..first+n`.
pub fn uniform(seed: u64, n: usize, first: u64) -> Vec<CaseRecord> {
    let mut r = rng(seed);
    (0..n)
        .map(|i| {
            CaseRecord::at(
                first + i as u64,
                Point::xy(r.gen_range(0.0..100.0), r.gen_range(0.0..100.0)).unwrap(),
            )
        })
        .collect()
}

/// Records on a coarse integer grid, so many distances tie exactly.
pub fn gridded(seed: u64, n: usize) -> Vec<CaseRecord> {
    let mut r = rng(seed);
    (0..n)
        .map(|i| {
            CaseRecord::at(
                i as u64,
                Point::xy(r.gen_range(0..20) as f64, r.gen_range(0..20) as f64).unwrap(),
            )
        })
        .collect()
}

pub fn random_query(r: &mut ChaCha8Rng, ks: &[usize], max_radius: f64) -> Query {
    let c = Point::xy(r.gen_range(-5.0..105.0), r.gen_range(-5.0..105.0)).unwrap();
    if r.gen_bool(0.5) {
        Query::knn(c, ks[r.gen_range(0..ks.len())])
    } else {
        Query::range(c, r.gen_range(0.0..max_radius))
    }
}
