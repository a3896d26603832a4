//! The coordinator: the receiving role admits queries and assigns ids, the
//! replying role fans out, gathers partials, merges and answers.
//!
//! Both roles live in one process here but talk to storing nodes only through
//! an [`Endpoint`], so the same code runs over the in-process fabric and TCP.

use std::collections::HashMap;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use parking_lot::{Condvar, Mutex};

use super::cache::{QueryCache, DEFAULT_CACHE_CAPACITY};
use super::merge::{merge_knn, merge_range};
use super::ClusterError;
use crate::geom::{mindist, Point};
use crate::ingest::Strategy;
use crate::model::{CaseRecord, Hits, Query, QueryResult};
use crate::transport::{error_code, Endpoint, Envelope, Message, StatusReport};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(5);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoordinatorConfig {
    pub dimension: usize,
    /// Decides where routed inserts go.
    pub strategy: Strategy,
    /// How long a fan-out waits before answering without missing shards.
    pub timeout: Duration,
    pub cache_capacity: usize,
    /// Re-evaluate every cache hit and count disagreements.
    pub verify_cache: bool,
}

impl CoordinatorConfig {
    pub fn new(dimension: usize) -> Self {
        CoordinatorConfig {
            dimension,
            strategy: Strategy::Chunk,
            timeout: DEFAULT_TIMEOUT,
            cache_capacity: DEFAULT_CACHE_CAPACITY,
            verify_cache: false,
        }
    }
}

/// A storing node as the coordinator addresses it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShardRef {
    pub node_id: u32,
    pub name: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CoordinatorStats {
    pub queries: u64,
    pub cache_hits: u64,
    pub cache_misses: u64,
    /// Shard answers that arrived after their query had been answered.
    pub late_replies: u64,
    /// Verified cache hits whose fresh evaluation disagreed.
    pub cache_mismatches: u64,
    pub degraded: u64,
}

#[derive(Debug, Clone)]
enum Reply {
    Hits(Hits),
    Status(StatusReport),
    InsertAck(u32),
    Failed { code: u16, text: String },
}

#[derive(Default)]
struct SlotState {
    expected: usize,
    replies: Vec<(u32, Reply)>,
}

#[derive(Default)]
struct Slot {
    state: Mutex<SlotState>,
    done: Condvar,
}

impl Slot {
    fn new(expected: usize) -> Arc<Slot> {
        Arc::new(Slot {
            state: Mutex::new(SlotState {
                expected,
                replies: Vec::with_capacity(expected),
            }),
            done: Condvar::new(),
        })
    }

    /// First reply per node wins; later ones are ignored.
    fn push(&self, node: u32, reply: Reply) {
        let mut st = self.state.lock();
        if st.replies.iter().any(|(n, _)| *n == node) || st.replies.len() >= st.expected {
            return;
        }
        st.replies.push((node, reply));
        if st.replies.len() == st.expected {
            self.done.notify_all();
        }
    }

    fn wait(&self, deadline: Instant) -> Vec<(u32, Reply)> {
        let mut st = self.state.lock();
        while st.replies.len() < st.expected {
            if self.done.wait_until(&mut st, deadline).timed_out() {
                break;
            }
        }
        std::mem::take(&mut st.replies)
    }
}

struct Inner {
    config: CoordinatorConfig,
    endpoint: Arc<dyn Endpoint>,
    shards: Vec<ShardRef>,
    by_name: HashMap<String, u32>,
    next_message: AtomicU64,
    sequences: Mutex<HashMap<u32, u32>>,
    pending: Mutex<HashMap<u64, Arc<Slot>>>,
    control: Mutex<HashMap<u64, Arc<Slot>>>,
    cache: Mutex<QueryCache>,
    writes: Mutex<()>,
    stats: Mutex<CoordinatorStats>,
    stop: AtomicBool,
}

pub struct Coordinator {
    inner: Arc<Inner>,
    dispatcher: Option<JoinHandle<()>>,
}

impl Coordinator {
    /// Starts the dispatcher thread reading `endpoint`. Queries and inserts
    /// also arrive as messages from remote clients on the same endpoint.
    pub fn start(
        endpoint: Arc<dyn Endpoint>,
        shards: Vec<ShardRef>,
        config: CoordinatorConfig,
    ) -> Result<Coordinator, ClusterError> {
        if config.dimension == 0 {
            return Err(ClusterError::Config("dimension must be at least 1".into()));
        }
        let mut by_name = HashMap::new();
        for s in &shards {
            if by_name.insert(s.name.clone(), s.node_id).is_some() {
                return Err(ClusterError::Config(format!("shard name '{}' used twice", s.name)));
            }
        }
        let mut ids: Vec<u32> = shards.iter().map(|s| s.node_id).collect();
        ids.sort_unstable();
        ids.dedup();
        if ids.len() != shards.len() {
            return Err(ClusterError::Config("shard node ids must be distinct".into()));
        }
        let inner = Arc::new(Inner {
            config,
            endpoint,
            shards,
            by_name,
            next_message: AtomicU64::new(1),
            sequences: Mutex::new(HashMap::new()),
            pending: Mutex::new(HashMap::new()),
            control: Mutex::new(HashMap::new()),
            cache: Mutex::new(QueryCache::new(config.cache_capacity)),
            writes: Mutex::new(()),
            stats: Mutex::new(CoordinatorStats::default()),
            stop: AtomicBool::new(false),
        });
        let dispatcher = {
            let inner = Arc::clone(&inner);
            thread::Builder::new()
                .name("coordinator".into())
                .spawn(move || dispatch(&inner))
                .map_err(|e| ClusterError::Config(e.to_string()))?
        };
        Ok(Coordinator {
            inner,
            dispatcher: Some(dispatcher),
        })
    }

    pub fn config(&self) -> &CoordinatorConfig {
        &self.inner.config
    }

    pub fn shards(&self) -> &[ShardRef] {
        &self.inner.shards
    }

    pub fn stats(&self) -> CoordinatorStats {
        *self.inner.stats.lock()
    }

    pub fn cache_len(&self) -> usize {
        self.inner.cache.lock().len()
    }

    /// Receiving role: validates, assigns an id, and starts evaluation.
    /// The returned ticket carries the id at once; [`Ticket::wait`] yields
    /// the answer.
    pub fn submit(&self, client_id: u32, query: Query) -> Result<Ticket, ClusterError> {
        submit(&self.inner, client_id, query)
    }

    /// Submits and waits.
    pub fn query(&self, client_id: u32, query: Query) -> Result<QueryResult, ClusterError> {
        self.submit(client_id, query)?.wait()
    }

    /// Sends a record to one storing node, chosen by the configured strategy,
    /// and empties the cache once the node acknowledges. Returns the node id.
    pub fn route_insert(&self, record: CaseRecord) -> Result<u32, ClusterError> {
        route_insert(&self.inner, record)
    }

    /// Current status of every shard that answers before the timeout.
    pub fn shard_status(&self) -> Result<Vec<StatusReport>, ClusterError> {
        let (reports, _) = broadcast_status(&self.inner, None)?;
        Ok(reports)
    }
}

impl Drop for Coordinator {
    fn drop(&mut self) {
        self.inner.stop.store(true, Ordering::Release);
        if let Some(t) = self.dispatcher.take() {
            let _ = t.join();
        }
    }
}

/// Handle for one admitted query.
pub struct Ticket {
    query_id: u64,
    state: TicketState,
}

enum TicketState {
    Ready(QueryResult),
    Pending {
        inner: Arc<Inner>,
        slot: Arc<Slot>,
        query: Query,
        deadline: Instant,
        generation: u64,
        cached: Option<QueryResult>,
    },
}

impl Ticket {
    pub fn query_id(&self) -> u64 {
        self.query_id
    }

    /// Replying role: blocks until every shard answered or the deadline
    /// passed, then merges. Shards that did not answer are listed in
    /// `missing_shards`.
    pub fn wait(self) -> Result<QueryResult, ClusterError> {
        let (inner, slot, query, deadline, generation, cached) = match self.state {
            TicketState::Ready(r) => return Ok(r),
            TicketState::Pending {
                inner,
                slot,
                query,
                deadline,
                generation,
                cached,
            } => (inner, slot, query, deadline, generation, cached),
        };
        let replies = slot.wait(deadline);
        inner.pending.lock().remove(&self.query_id);

        let mut knn = Vec::new();
        let mut range = Vec::new();
        let mut answered = Vec::new();
        for (node, reply) in replies {
            match (reply, &query) {
                (Reply::Hits(Hits::Knn(v)), Query::Knn { .. }) => knn.push(v),
                (Reply::Hits(Hits::Range(v)), Query::Range { .. }) => range.push(v),
                _ => continue,
            }
            answered.push(node);
        }
        let mut missing: Vec<u32> = inner
            .shards
            .iter()
            .map(|s| s.node_id)
            .filter(|id| !answered.contains(id))
            .collect();
        missing.sort_unstable();

        let mut duplicates_removed = 0;
        let hits = match &query {
            Query::Knn { k, .. } => Hits::Knn(merge_knn(&knn, *k).map_err(|e| ClusterError::Internal(e.to_string()))?),
            Query::Range { .. } => {
                let (ids, dups) = merge_range(&range).map_err(|e| ClusterError::Internal(e.to_string()))?;
                duplicates_removed = dups;
                Hits::Range(ids)
            }
        };
        let fresh = QueryResult {
            query_id: self.query_id,
            hits,
            from_cache: false,
            shard_count: inner.shards.len() as u32,
            missing_shards: missing,
            duplicates_removed,
        };
        let mut stats = inner.stats.lock();
        if fresh.degraded() {
            stats.degraded += 1;
        }
        match cached {
            Some(c) => {
                if !fresh.degraded() && c.hits != fresh.hits {
                    stats.cache_mismatches += 1;
                }
                Ok(c)
            }
            None => {
                drop(stats);
                inner.cache.lock().insert(&query, &fresh, generation);
                Ok(fresh)
            }
        }
    }
}

fn next_message_id(inner: &Inner) -> u64 {
    inner.next_message.fetch_add(1, Ordering::Relaxed)
}

fn send(inner: &Inner, to: &str, correlation_id: u64, payload: Message) -> Result<(), ClusterError> {
    let env = Envelope {
        message_id: next_message_id(inner),
        correlation_id,
        sender: inner.endpoint.name().to_string(),
        payload,
    };
    inner.endpoint.send(to, &env).map_err(ClusterError::Transport)
}

fn submit(inner: &Arc<Inner>, client_id: u32, query: Query) -> Result<Ticket, ClusterError> {
    query.validate(inner.config.dimension).map_err(ClusterError::BadQuery)?;
    let query_id = {
        let mut seqs = inner.sequences.lock();
        let seq = seqs.entry(client_id).or_insert(0);
        *seq = seq.checked_add(1).ok_or(ClusterError::ClientExhausted(client_id))?;
        (u64::from(client_id) << 32) | u64::from(*seq)
    };
    inner.stats.lock().queries += 1;

    let (cached, generation) = {
        let mut cache = inner.cache.lock();
        (cache.lookup(&query), cache.generation())
    };
    {
        let mut stats = inner.stats.lock();
        if cached.is_some() {
            stats.cache_hits += 1;
        } else {
            stats.cache_misses += 1;
        }
    }
    let cached = cached.map(|mut r| {
        r.query_id = query_id;
        r
    });
    if let Some(r) = &cached {
        if !inner.config.verify_cache {
            return Ok(Ticket {
                query_id,
                state: TicketState::Ready(r.clone()),
            });
        }
    }
    if inner.shards.is_empty() {
        let r = QueryResult {
            query_id,
            hits: Hits::empty_for(&query),
            from_cache: false,
            shard_count: 0,
            missing_shards: Vec::new(),
            duplicates_removed: 0,
        };
        return Ok(Ticket {
            query_id,
            state: TicketState::Ready(cached.unwrap_or(r)),
        });
    }

    let slot = Slot::new(inner.shards.len());
    inner.pending.lock().insert(query_id, Arc::clone(&slot));
    let deadline = Instant::now() + inner.config.timeout;
    for s in &inner.shards {
        let msg = Message::ShardQuery {
            query_id,
            query: query.clone(),
        };
        if let Err(e) = send(inner, &s.name, query_id, msg) {
            slot.push(
                s.node_id,
                Reply::Failed {
                    code: error_code::UNAVAILABLE,
                    text: e.to_string(),
                },
            );
        }
    }
    Ok(Ticket {
        query_id,
        state: TicketState::Pending {
            inner: Arc::clone(inner),
            slot,
            query,
            deadline,
            generation,
            cached,
        },
    })
}

/// Sends `payload` to each listed shard as one control exchange and waits
/// for all replies or the deadline.
fn control_round(inner: &Inner, targets: &[&ShardRef], payload: Message) -> Vec<(u32, Reply)> {
    let slot = Slot::new(targets.len());
    let mut ids = Vec::with_capacity(targets.len());
    for s in targets {
        let message_id = next_message_id(inner);
        inner.control.lock().insert(message_id, Arc::clone(&slot));
        ids.push(message_id);
        let env = Envelope {
            message_id,
            correlation_id: 0,
            sender: inner.endpoint.name().to_string(),
            payload: payload.clone(),
        };
        if let Err(e) = inner.endpoint.send(&s.name, &env) {
            slot.push(
                s.node_id,
                Reply::Failed {
                    code: error_code::UNAVAILABLE,
                    text: e.to_string(),
                },
            );
        }
    }
    let replies = slot.wait(Instant::now() + inner.config.timeout);
    let mut control = inner.control.lock();
    for id in ids {
        control.remove(&id);
    }
    replies
}

fn broadcast_status(
    inner: &Inner,
    probe: Option<crate::model::RecordId>,
) -> Result<(Vec<StatusReport>, Vec<u32>), ClusterError> {
    let targets: Vec<&ShardRef> = inner.shards.iter().collect();
    let replies = control_round(inner, &targets, Message::StatusRequest { probe });
    let mut reports: Vec<StatusReport> = replies
        .into_iter()
        .filter_map(|(_, r)| match r {
            Reply::Status(s) => Some(s),
            _ => None,
        })
        .collect();
    reports.sort_by_key(|r| r.node_id);
    let missing = inner
        .shards
        .iter()
        .map(|s| s.node_id)
        .filter(|id| !reports.iter().any(|r| r.node_id == *id))
        .collect();
    Ok((reports, missing))
}

fn choose_shard(strategy: Strategy, reports: &[StatusReport], point: &Point) -> u32 {
    let fewest = || {
        reports
            .iter()
            .min_by_key(|r| (r.records, r.node_id))
            .map(|r| r.node_id)
            .expect("at least one shard")
    };
    match strategy {
        Strategy::Chunk => fewest(),
        Strategy::Spatial => {
            if let Some(r) = reports
                .iter()
                .filter(|r| r.mbr.as_ref().is_some_and(|m| m.contains_point(point)))
                .min_by_key(|r| r.node_id)
            {
                return r.node_id;
            }
            reports
                .iter()
                .filter_map(|r| {
                    let d = mindist(point, r.mbr.as_ref()?).ok()?;
                    Some((d, r.node_id))
                })
                .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
                .map_or_else(fewest, |(_, id)| id)
        }
    }
}

fn route_insert(inner: &Inner, record: CaseRecord) -> Result<u32, ClusterError> {
    let found = record.position.dim();
    if found != inner.config.dimension {
        return Err(ClusterError::Dimension {
            expected: inner.config.dimension,
            found,
        });
    }
    if inner.shards.is_empty() {
        return Err(ClusterError::NoShards);
    }
    let _writes = inner.writes.lock();
    let (reports, missing) = broadcast_status(inner, Some(record.id))?;
    if !missing.is_empty() {
        return Err(ClusterError::Unavailable(missing));
    }
    if reports.iter().any(|r| r.probe_hit) {
        return Err(ClusterError::DuplicateId(record.id));
    }
    let node_id = choose_shard(inner.config.strategy, &reports, &record.position);
    let target = inner
        .shards
        .iter()
        .find(|s| s.node_id == node_id)
        .expect("report from a known shard");
    let id = record.id;
    let replies = control_round(inner, &[target], Message::InsertRecord(record));
    match replies.into_iter().next() {
        Some((_, Reply::InsertAck(n))) => {
            inner.cache.lock().invalidate_all();
            Ok(n)
        }
        Some((_, Reply::Failed { code, .. })) if code == error_code::DUPLICATE_ID => Err(ClusterError::DuplicateId(id)),
        Some((_, Reply::Failed { code, text })) => Err(ClusterError::Remote { code, text }),
        Some(_) => Err(ClusterError::Internal("unexpected reply to an insert".into())),
        None => Err(ClusterError::Unavailable(vec![node_id])),
    }
}

fn dispatch(inner: &Arc<Inner>) {
    while !inner.stop.load(Ordering::Acquire) {
        let env = match inner.endpoint.recv_timeout(Duration::from_millis(20)) {
            Ok(Some(env)) => env,
            Ok(None) => continue,
            Err(_) => return,
        };
        let node = inner.by_name.get(&env.sender).copied();
        match env.payload {
            Message::ShardResult {
                query_id,
                node_id,
                hits,
            } => {
                // trust the fabric identity over the payload's claim
                let Some(node) = node.filter(|n| *n == node_id) else {
                    continue;
                };
                let slot = inner.pending.lock().get(&query_id).cloned();
                match slot {
                    Some(s) => s.push(node, Reply::Hits(hits)),
                    None => inner.stats.lock().late_replies += 1,
                }
            }
            Message::StatusReport(report) => {
                if let (Some(node), Some(s)) = (node, inner.control.lock().get(&env.correlation_id).cloned()) {
                    s.push(node, Reply::Status(report));
                }
            }
            Message::InsertAck { node_id } => {
                if let (Some(node), Some(s)) = (node, inner.control.lock().get(&env.correlation_id).cloned()) {
                    s.push(node, Reply::InsertAck(node_id));
                }
            }
            Message::Error { code, text } => {
                let Some(node) = node else { continue };
                let slot = inner
                    .control
                    .lock()
                    .get(&env.correlation_id)
                    .cloned()
                    .or_else(|| inner.pending.lock().get(&env.correlation_id).cloned());
                if let Some(s) = slot {
                    s.push(node, Reply::Failed { code, text });
                }
            }
            Message::QuerySubmit { client_id, query } => {
                let inner = Arc::clone(inner);
                let (client, request_id) = (env.sender, env.message_id);
                thread::spawn(move || serve_client_query(&inner, &client, request_id, client_id, query));
            }
            Message::InsertRecord(record) => {
                let inner = Arc::clone(inner);
                let (client, request_id) = (env.sender, env.message_id);
                thread::spawn(move || {
                    let payload = match route_insert(&inner, record) {
                        Ok(node_id) => Message::InsertAck { node_id },
                        Err(e) => e.to_message(),
                    };
                    let _ = send(&inner, &client, request_id, payload);
                });
            }
            other => {
                let _ = send(
                    inner,
                    &env.sender,
                    env.message_id,
                    Message::Error {
                        code: error_code::UNEXPECTED,
                        text: format!("coordinator does not handle {}", other.name()),
                    },
                );
            }
        }
    }
}

fn serve_client_query(inner: &Arc<Inner>, client: &str, request_id: u64, client_id: u32, query: Query) {
    match submit(inner, client_id, query) {
        Ok(ticket) => {
            let query_id = ticket.query_id();
            let _ = send(inner, client, request_id, Message::QueryAck { query_id });
            let payload = match ticket.wait() {
                Ok(r) => Message::QueryComplete(r),
                Err(e) => e.to_message(),
            };
            let _ = send(inner, client, query_id, payload);
        }
        Err(e) => {
            let _ = send(inner, client, request_id, e.to_message());
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Rect;

    fn report(node_id: u32, records: u64, mbr: Option<(f64, f64, f64, f64)>) -> StatusReport {
        StatusReport {
            node_id,
            ready: true,
            records,
            estimated_bytes: 0,
            probe_hit: false,
            mbr: mbr.map(|(a, b, c, d)| Rect::new(Point::xy(a, b).unwrap(), Point::xy(c, d).unwrap()).unwrap()),
        }
    }

    #[test]
    fn routing_rules() {
        let p = Point::xy(5.0, 5.0).unwrap();
        let rs = vec![report(0, 3, None), report(1, 2, None), report(2, 2, None)];
        assert_eq!(choose_shard(Strategy::Chunk, &rs, &p), 1);
        let rs = vec![
            report(0, 1, Some((0.0, 0.0, 1.0, 1.0))),
            report(1, 9, Some((6.0, 6.0, 7.0, 7.0))),
            report(2, 9, Some((4.0, 4.0, 6.0, 6.0))),
        ];
        assert_eq!(choose_shard(Strategy::Spatial, &rs, &p), 2);
        let far = Point::xy(8.0, 8.0).unwrap();
        assert_eq!(choose_shard(Strategy::Spatial, &rs, &far), 1);
        let empty = vec![report(0, 0, None), report(1, 0, None)];
        assert_eq!(choose_shard(Strategy::Spatial, &empty, &p), 0);
    }
}
