//! Records, queries and query results.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use crate::geom::Point;

/// Store-wide unique identifier of a case record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RecordId(pub u64);

impl fmt::Display for RecordId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Status {
    Confirmed,
    Suspected,
    Recovered,
    Dead,
    #[default]
    Unknown,
}

impl Status {
    pub const ALL: [Status; 5] = [
        Status::Confirmed,
        Status::Suspected,
        Status::Recovered,
        Status::Dead,
        Status::Unknown,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Status::Confirmed => "confirmed",
            Status::Suspected => "suspected",
            Status::Recovered => "recovered",
            Status::Dead => "dead",
            Status::Unknown => "unknown",
        }
    }

    pub(crate) fn code(self) -> u8 {
        match self {
            Status::Confirmed => 0,
            Status::Suspected => 1,
            Status::Recovered => 2,
            Status::Dead => 3,
            Status::Unknown => 4,
        }
    }

    pub(crate) fn from_code(code: u8) -> Option<Status> {
        Status::ALL.get(code as usize).copied()
    }
}

impl FromStr for Status {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Status::ALL
            .into_iter()
            .find(|st| st.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| format!("unknown status '{s}'"))
    }
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One patient/case row.
#[derive(Debug, Clone, PartialEq)]
pub struct CaseRecord {
    pub id: RecordId,
    pub position: Point,
    pub status: Status,
    /// Days since the configured epoch.
    pub event_day: Option<i64>,
    pub attributes: Vec<(String, String)>,
}

impl CaseRecord {
    /// A record carrying only an id and a position.
    pub fn at(id: u64, position: Point) -> Self {
        CaseRecord {
            id: RecordId(id),
            position,
            status: Status::Unknown,
            event_day: None,
            attributes: Vec::new(),
        }
    }

    pub fn attribute(&self, name: &str) -> Option<&str> {
        self.attributes.iter().find(|(k, _)| k == name).map(|(_, v)| v.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum QueryError {
    #[error("radius must be a finite non-negative number, got {0}")]
    BadRadius(f64),
    #[error("query dimension {found} does not match store dimension {expected}")]
    Dimension { expected: usize, found: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Query {
    Knn { center: Point, k: usize },
    Range { center: Point, radius: f64 },
}

impl Query {
    pub fn knn(center: Point, k: usize) -> Self {
        Query::Knn { center, k }
    }

    pub fn range(center: Point, radius: f64) -> Self {
        Query::Range { center, radius }
    }

    pub fn center(&self) -> &Point {
        match self {
            Query::Knn { center, .. } | Query::Range { center, .. } => center,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Query::Knn { .. } => "knn",
            Query::Range { .. } => "range",
        }
    }

    /// Checks the query against a store of dimension `dim`.
    pub fn validate(&self, dim: usize) -> Result<(), QueryError> {
        if self.center().dim() != dim {
            return Err(QueryError::Dimension {
                expected: dim,
                found: self.center().dim(),
            });
        }
        if let Query::Range { radius, .. } = self {
            if !(radius.is_finite() && *radius >= 0.0) {
                return Err(QueryError::BadRadius(*radius));
            }
        }
        Ok(())
    }
}

/// A KNN hit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub id: RecordId,
    pub distance: f64,
}

impl Neighbor {
    /// The (distance, id) order every KNN answer is sorted by.
    pub fn rank_cmp(&self, other: &Neighbor) -> Ordering {
        self.distance.total_cmp(&other.distance).then(self.id.cmp(&other.id))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Hits {
    /// Sorted by (distance, id).
    Knn(Vec<Neighbor>),
    /// Sorted by id.
    Range(Vec<RecordId>),
}

impl Hits {
    pub fn empty_for(query: &Query) -> Hits {
        match query {
            Query::Knn { .. } => Hits::Knn(Vec::new()),
            Query::Range { .. } => Hits::Range(Vec::new()),
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Hits::Knn(v) => v.len(),
            Hits::Range(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn ids(&self) -> Vec<RecordId> {
        match self {
            Hits::Knn(v) => v.iter().map(|n| n.id).collect(),
            Hits::Range(v) => v.clone(),
        }
    }
}

/// Answer to one submitted query, tagged with its id.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryResult {
    pub query_id: u64,
    pub hits: Hits,
    pub from_cache: bool,
    pub shard_count: u32,
    /// Shards that did not answer before the deadline. Non-empty means degraded.
    pub missing_shards: Vec<u32>,
    /// Duplicate ids dropped while merging range partials.
    pub duplicates_removed: u64,
}

impl QueryResult {
    pub fn degraded(&self) -> bool {
        !self.missing_shards.is_empty()
    }
}
