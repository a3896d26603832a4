use std::num::NonZeroUsize;

use lru::LruCache;
use smallvec::SmallVec;

use crate::model::{Query, QueryResult};

pub const DEFAULT_CACHE_CAPACITY: usize = 1024;

/// Exact-bit identity of a query: kind, every center coordinate's bits, and
/// the bits of k or the radius. Queries that merely round alike never share
/// an entry.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CacheKey {
    kind: u8,
    center: SmallVec<[u64; 3]>,
    param: u64,
}

impl CacheKey {
    pub fn of(query: &Query) -> Self {
        let (kind, param) = match query {
            Query::Knn { k, .. } => (0, *k as u64),
            Query::Range { radius, .. } => (1, radius.to_bits()),
        };
        CacheKey {
            kind,
            center: query.center().coords().iter().map(|c| c.to_bits()).collect(),
            param,
        }
    }
}

/// LRU map from query to its last complete answer.
///
/// Every write anywhere in the cluster bumps the generation and empties the
/// cache. An answer computed under an older generation is refused on insert,
/// so a query that raced a write never caches a stale result.
pub struct QueryCache {
    entries: Option<LruCache<CacheKey, QueryResult>>,
    generation: u64,
}

impl QueryCache {
    /// A capacity of 0 disables caching.
    pub fn new(capacity: usize) -> Self {
        QueryCache {
            entries: NonZeroUsize::new(capacity).map(LruCache::new),
            generation: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.entries.as_ref().map_or(0, |e| e.cap().get())
    }

    pub fn len(&self) -> usize {
        self.entries.as_ref().map_or(0, LruCache::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn generation(&self) -> u64 {
        self.generation
    }

    /// The cached answer, marked `from_cache`, refreshing its recency.
    pub fn lookup(&mut self, query: &Query) -> Option<QueryResult> {
        let hit = self.entries.as_mut()?.get(&CacheKey::of(query))?;
        let mut r = hit.clone();
        r.from_cache = true;
        Some(r)
    }

    /// Stores `result` if no invalidation happened since `generation` was
    /// read. Degraded answers are never stored.
    pub fn insert(&mut self, query: &Query, result: &QueryResult, generation: u64) -> bool {
        if generation != self.generation || result.degraded() {
            return false;
        }
        match self.entries.as_mut() {
            Some(e) => {
                e.put(CacheKey::of(query), result.clone());
                true
            }
            None => false,
        }
    }

    pub fn invalidate_all(&mut self) {
        self.generation += 1;
        if let Some(e) = self.entries.as_mut() {
            e.clear();
        }
    }
}
