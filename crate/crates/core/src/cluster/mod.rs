//! Storing nodes, the coordinator, and ready-made local clusters.

mod cache;
mod client;
mod coordinator;
mod local;
mod merge;
mod node;
pub mod store;

use crate::model::{QueryError, RecordId};
use crate::transport::{error_code, Message, TransportError};

pub use cache::{CacheKey, QueryCache, DEFAULT_CACHE_CAPACITY};
pub use client::RemoteClient;
pub use coordinator::{Coordinator, CoordinatorConfig, CoordinatorStats, ShardRef, Ticket, DEFAULT_TIMEOUT};
pub use local::{FabricKind, LocalCluster};
pub use merge::{merge_knn, merge_range, MergeError};
pub use node::{shard_file_name, shard_name, NodeError, NodeHost, NodeState, StoringNode, SHARD_MAGIC, SHARD_VERSION};

/// Fabric name the coordinator registers under.
pub const COORDINATOR_NAME: &str = "coordinator";

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ClusterError {
    #[error("rejected query: {0}")]
    BadQuery(QueryError),
    #[error("record {0} already exists")]
    DuplicateId(RecordId),
    #[error("record dimension {found} does not match cluster dimension {expected}")]
    Dimension { expected: usize, found: usize },
    #[error("no storing nodes configured")]
    NoShards,
    #[error("shards did not answer: {0:?}")]
    Unavailable(Vec<u32>),
    #[error("client {0} has used up its query id space")]
    ClientExhausted(u32),
    #[error("remote error {code}: {text}")]
    Remote { code: u16, text: String },
    #[error("timed out waiting for the coordinator")]
    Timeout,
    #[error("bad cluster config: {0}")]
    Config(String),
    #[error(transparent)]
    Node(#[from] NodeError),
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error("internal error: {0}")]
    Internal(String),
}

impl ClusterError {
    pub(crate) fn to_message(&self) -> Message {
        let code = match self {
            ClusterError::BadQuery(_) => error_code::BAD_QUERY,
            ClusterError::DuplicateId(_) => error_code::DUPLICATE_ID,
            ClusterError::Dimension { .. } => error_code::DIMENSION,
            ClusterError::NoShards | ClusterError::Unavailable(_) | ClusterError::Timeout => error_code::UNAVAILABLE,
            ClusterError::Remote { code, .. } => *code,
            _ => error_code::INTERNAL,
        };
        Message::Error {
            code,
            text: self.to_string(),
        }
    }
}
