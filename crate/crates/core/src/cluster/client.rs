use std::net::SocketAddr;
use std::time::{Duration, Instant};

use super::{ClusterError, COORDINATOR_NAME};
use crate::model::{CaseRecord, Query, QueryResult};
use crate::transport::{Endpoint, Envelope, Message, TcpEndpoint, TransportError};

/// Talks to a coordinator over TCP, one request at a time.
pub struct RemoteClient {
    endpoint: TcpEndpoint,
    client_id: u32,
    next_message: u64,
    timeout: Duration,
}

impl RemoteClient {
    pub fn connect(coordinator: SocketAddr, client_id: u32, timeout: Duration) -> Result<Self, ClusterError> {
        let name = format!("client-{client_id}-{}", std::process::id());
        let endpoint = TcpEndpoint::bind(&name, "127.0.0.1:0")
            .map_err(|e| ClusterError::Transport(TransportError::Io(e.to_string())))?;
        endpoint.add_peer(COORDINATOR_NAME, coordinator);
        Ok(RemoteClient {
            endpoint,
            client_id,
            next_message: 1,
            timeout,
        })
    }

    fn send(&mut self, payload: Message) -> Result<u64, ClusterError> {
        let message_id = self.next_message;
        self.next_message += 1;
        let env = Envelope {
            message_id,
            correlation_id: 0,
            sender: self.endpoint.name().to_string(),
            payload,
        };
        self.endpoint.send(COORDINATOR_NAME, &env)?;
        Ok(message_id)
    }

    fn next(&self, deadline: Instant) -> Result<Envelope, ClusterError> {
        let left = deadline.saturating_duration_since(Instant::now());
        if left.is_zero() {
            return Err(ClusterError::Timeout);
        }
        self.endpoint.recv_timeout(left)?.ok_or(ClusterError::Timeout)
    }

    /// Submits a query and waits for its answer, returning the assigned id's
    /// result.
    pub fn query(&mut self, query: Query) -> Result<QueryResult, ClusterError> {
        let request = self.send(Message::QuerySubmit {
            client_id: self.client_id,
            query,
        })?;
        let deadline = Instant::now() + self.timeout;
        let mut query_id = None;
        loop {
            let env = self.next(deadline)?;
            match env.payload {
                Message::QueryAck { query_id: id } if env.correlation_id == request => query_id = Some(id),
                Message::QueryComplete(r) if Some(r.query_id) == query_id => return Ok(r),
                Message::Error { code, text }
                    if env.correlation_id == request || Some(env.correlation_id) == query_id =>
                {
                    return Err(remote(code, text));
                }
                _ => {}
            }
        }
    }

    /// Routes a record through the coordinator; returns the storing node id.
    pub fn insert(&mut self, record: CaseRecord) -> Result<u32, ClusterError> {
        let request = self.send(Message::InsertRecord(record))?;
        let deadline = Instant::now() + self.timeout;
        loop {
            let env = self.next(deadline)?;
            if env.correlation_id != request {
                continue;
            }
            match env.payload {
                Message::InsertAck { node_id } => return Ok(node_id),
                Message::Error { code, text } => return Err(remote(code, text)),
                _ => {}
            }
        }
    }
}

fn remote(code: u16, text: String) -> ClusterError {
    ClusterError::Remote { code, text }
}
