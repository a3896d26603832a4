//! Storing nodes: one tree plus the records it indexes.
//!
//! Shard file (`shard-<id>.idx`):
//!
//! ```text
//! magic      8 bytes  "CIDXSHRD"
//! version    u8       1
//! node_id    u32
//! tree       tree snapshot ("CIDXTREE" ...)
//! count      u64
//! records    count × record, ascending id
//! ```

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::Duration;

use parking_lot::RwLock;

use crate::bytes::{PutBe, Reader};
use crate::codec::{self, CodecError};
use crate::geom::Rect;
use crate::model::{CaseRecord, Hits, Query, RecordId};
use crate::rplus::{RPlusTree, SnapshotError, TreeConfig, TreeError, TreeStats};
use crate::transport::{error_code, Endpoint, Envelope, Message, StatusReport};

pub const SHARD_MAGIC: &[u8; 8] = b"CIDXSHRD";
pub const SHARD_VERSION: u8 = 1;

pub fn shard_file_name(node_id: u32) -> String {
    format!("shard-{node_id}.idx")
}

/// Fabric name of a storing node.
pub fn shard_name(node_id: u32) -> String {
    format!("shard-{node_id}")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeState {
    Building,
    Ready,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NodeError {
    #[error("node {0} is still building")]
    NotReady(u32),
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error(transparent)]
    Snapshot(#[from] SnapshotError),
    #[error("corrupt shard file: {0}")]
    Corrupt(String),
    #[error("cannot access {path}: {message}")]
    Io { path: String, message: String },
}

struct ShardData {
    tree: RPlusTree,
    records: HashMap<RecordId, CaseRecord>,
}

pub struct StoringNode {
    node_id: u32,
    ready: AtomicBool,
    data: RwLock<ShardData>,
}

impl std::fmt::Debug for StoringNode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("StoringNode")
            .field("node_id", &self.node_id)
            .field("state", &self.state())
            .field("records", &self.len())
            .finish()
    }
}

impl StoringNode {
    /// An empty node in the building state.
    pub fn new(node_id: u32, config: TreeConfig) -> Result<Self, NodeError> {
        Ok(StoringNode {
            node_id,
            ready: AtomicBool::new(false),
            data: RwLock::new(ShardData {
                tree: RPlusTree::new(config)?,
                records: HashMap::new(),
            }),
        })
    }

    /// Bulk-loads `records` and marks the node ready.
    pub fn build(node_id: u32, config: TreeConfig, records: Vec<CaseRecord>) -> Result<Self, NodeError> {
        let tree = RPlusTree::bulk_load(config, &records)?;
        Self::from_parts(node_id, tree, records)
    }

    /// Pairs an already built tree with its records; ready on return.
    pub fn from_parts(node_id: u32, tree: RPlusTree, records: Vec<CaseRecord>) -> Result<Self, NodeError> {
        if records.len() != tree.len() || records.iter().any(|r| !tree.contains_id(r.id)) {
            return Err(NodeError::Corrupt("record table does not match the tree".into()));
        }
        let records: HashMap<RecordId, CaseRecord> = records.into_iter().map(|r| (r.id, r)).collect();
        if records.len() != tree.len() {
            return Err(NodeError::Corrupt("duplicate record ids".into()));
        }
        Ok(StoringNode {
            node_id,
            ready: AtomicBool::new(true),
            data: RwLock::new(ShardData { tree, records }),
        })
    }

    pub fn node_id(&self) -> u32 {
        self.node_id
    }

    pub fn state(&self) -> NodeState {
        if self.ready.load(Ordering::Acquire) {
            NodeState::Ready
        } else {
            NodeState::Building
        }
    }

    pub fn mark_ready(&self) {
        self.ready.store(true, Ordering::Release);
    }

    pub fn len(&self) -> usize {
        self.data.read().tree.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dimension(&self) -> usize {
        self.data.read().tree.config().dimension
    }

    pub fn contains(&self, id: RecordId) -> bool {
        self.data.read().tree.contains_id(id)
    }

    pub fn mbr(&self) -> Option<Rect> {
        self.data.read().tree.mbr().cloned()
    }

    pub fn record(&self, id: RecordId) -> Option<CaseRecord> {
        self.data.read().records.get(&id).cloned()
    }

    pub fn stats(&self) -> TreeStats {
        self.data.read().tree.stats()
    }

    /// Runs a query against the local tree. Only a ready node answers.
    pub fn evaluate(&self, query: &Query) -> Result<Hits, NodeError> {
        if self.state() != NodeState::Ready {
            return Err(NodeError::NotReady(self.node_id));
        }
        let data = self.data.read();
        Ok(match query {
            Query::Knn { center, k } => Hits::Knn(data.tree.knn_query(center, *k)?),
            Query::Range { center, radius } => Hits::Range(data.tree.range_query(center, *radius)?),
        })
    }

    pub fn insert(&self, record: CaseRecord) -> Result<(), NodeError> {
        let mut data = self.data.write();
        data.tree.insert(&record)?;
        data.records.insert(record.id, record);
        Ok(())
    }

    pub fn status(&self, probe: Option<RecordId>) -> StatusReport {
        let data = self.data.read();
        StatusReport {
            node_id: self.node_id,
            ready: self.state() == NodeState::Ready,
            records: data.tree.len() as u64,
            estimated_bytes: data.tree.stats().estimated_bytes,
            probe_hit: probe.is_some_and(|id| data.tree.contains_id(id)),
            mbr: data.tree.mbr().cloned(),
        }
    }

    /// All records, ascending by id.
    pub fn records(&self) -> Vec<CaseRecord> {
        let data = self.data.read();
        let mut v: Vec<CaseRecord> = data.records.values().cloned().collect();
        v.sort_by_key(|r| r.id);
        v
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let data = self.data.read();
        let mut out = Vec::new();
        out.extend_from_slice(SHARD_MAGIC);
        out.put_u8(SHARD_VERSION);
        out.put_u32(self.node_id);
        data.tree.write_to(&mut out);
        let mut ids: Vec<&RecordId> = data.records.keys().collect();
        ids.sort_unstable();
        out.put_u64(ids.len() as u64);
        for id in ids {
            codec::put_record(&mut out, &data.records[id]);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, NodeError> {
        let mut r = Reader::new(bytes);
        let truncated = |_| NodeError::Snapshot(SnapshotError::UnexpectedEnd);
        if r.take(8).map_err(truncated)? != SHARD_MAGIC {
            return Err(NodeError::Snapshot(SnapshotError::BadMagic));
        }
        let version = r.u8().map_err(truncated)?;
        if version != SHARD_VERSION {
            return Err(NodeError::Snapshot(SnapshotError::UnsupportedVersion(version)));
        }
        let node_id = r.u32().map_err(truncated)?;
        let tree = RPlusTree::read_from(&mut r)?;
        let count = r.u64().map_err(truncated)?;
        if count != tree.len() as u64 {
            return Err(NodeError::Corrupt(format!(
                "{count} records for a tree of {}",
                tree.len()
            )));
        }
        let mut records = Vec::with_capacity(tree.len());
        for _ in 0..count {
            let rec = codec::get_record(&mut r).map_err(|e| match e {
                CodecError::Truncated => NodeError::Snapshot(SnapshotError::UnexpectedEnd),
                CodecError::Utf8 => NodeError::Corrupt("invalid UTF-8 in record".into()),
                CodecError::Invalid(m) => NodeError::Corrupt(m),
            })?;
            records.push(rec);
        }
        if r.remaining() != 0 {
            return Err(NodeError::Snapshot(SnapshotError::TrailingBytes(r.remaining())));
        }
        Self::from_parts(node_id, tree, records)
    }

    /// Writes `shard-<id>.idx` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<PathBuf, NodeError> {
        let path = dir.join(shard_file_name(self.node_id));
        std::fs::write(&path, self.to_bytes()).map_err(|e| NodeError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Ok(path)
    }

    pub fn load(path: &Path) -> Result<Self, NodeError> {
        let bytes = std::fs::read(path).map_err(|e| NodeError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::from_bytes(&bytes)
    }
}

/// A running storing node: answers shard queries, inserts and status
/// requests arriving on its endpoint, one message at a time.
pub struct NodeHost {
    node: Arc<StoringNode>,
    stop: Arc<AtomicBool>,
    thread: Option<JoinHandle<()>>,
}

impl NodeHost {
    pub fn spawn(node: Arc<StoringNode>, endpoint: Arc<dyn Endpoint>) -> NodeHost {
        let stop = Arc::new(AtomicBool::new(false));
        let thread = {
            let node = Arc::clone(&node);
            let stop = Arc::clone(&stop);
            thread::Builder::new()
                .name(format!("node-{}", node.node_id()))
                .spawn(move || run_node(&node, endpoint.as_ref(), &stop))
                .expect("spawn node thread")
        };
        NodeHost {
            node,
            stop,
            thread: Some(thread),
        }
    }

    pub fn node(&self) -> &Arc<StoringNode> {
        &self.node
    }

    /// Stops answering without waiting for the loop to exit. Messages sent
    /// afterwards go unanswered, as if the node had crashed.
    pub fn kill(&self) {
        self.stop.store(true, Ordering::Release);
    }

    pub fn is_killed(&self) -> bool {
        self.stop.load(Ordering::Acquire)
    }

    /// Blocks until the loop ends (it only ends after [`NodeHost::kill`] or
    /// when the endpoint closes).
    pub fn join(mut self) {
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for NodeHost {
    fn drop(&mut self) {
        self.kill();
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

fn run_node(node: &StoringNode, ep: &dyn Endpoint, stop: &AtomicBool) {
    let next_id = AtomicU64::new(1);
    let reply = |to: &str, correlation_id: u64, payload: Message| {
        let env = Envelope {
            message_id: next_id.fetch_add(1, Ordering::Relaxed),
            correlation_id,
            sender: ep.name().to_string(),
            payload,
        };
        let _ = ep.send(to, &env);
    };
    while !stop.load(Ordering::Acquire) {
        let env = match ep.recv_timeout(Duration::from_millis(20)) {
            Ok(Some(env)) => env,
            Ok(None) => continue,
            Err(_) => return,
        };
        if stop.load(Ordering::Acquire) {
            return;
        }
        let to = env.sender.as_str();
        match env.payload {
            Message::ShardQuery { query_id, query } => {
                let payload = match node.evaluate(&query) {
                    Ok(hits) => Message::ShardResult {
                        query_id,
                        node_id: node.node_id(),
                        hits,
                    },
                    Err(e) => Message::Error {
                        code: error_code_for(&e),
                        text: e.to_string(),
                    },
                };
                reply(to, query_id, payload);
            }
            Message::InsertRecord(rec) => {
                let payload = match node.insert(rec) {
                    Ok(()) => Message::InsertAck {
                        node_id: node.node_id(),
                    },
                    Err(e) => Message::Error {
                        code: error_code_for(&e),
                        text: e.to_string(),
                    },
                };
                reply(to, env.message_id, payload);
            }
            Message::StatusRequest { probe } => {
                reply(to, env.message_id, Message::StatusReport(node.status(probe)));
            }
            other => reply(
                to,
                env.message_id,
                Message::Error {
                    code: error_code::UNEXPECTED,
                    text: format!("storing node does not handle {}", other.name()),
                },
            ),
        }
    }
}

fn error_code_for(e: &NodeError) -> u16 {
    match e {
        NodeError::NotReady(_) => error_code::NOT_READY,
        NodeError::Tree(TreeError::DuplicateId(_)) => error_code::DUPLICATE_ID,
        NodeError::Tree(TreeError::Dimension { .. } | TreeError::QueryDimension { .. }) => error_code::DIMENSION,
        NodeError::Tree(TreeError::BadRadius(_)) => error_code::BAD_QUERY,
        _ => error_code::INTERNAL,
    }
}
