//! Messages between coordinator and storing nodes, their wire encoding, and
//! two interchangeable fabrics: an in-process one with fault injection for
//! tests, and TCP for deployment.

mod fabric;
mod tcp;
pub mod wire;

use std::time::Duration;

use crate::geom::Rect;
use crate::model::{CaseRecord, Hits, Query, QueryResult, RecordId};

pub use fabric::{FabricEndpoint, InProcessFabric, LinkRule};
pub use tcp::TcpEndpoint;
pub use wire::{decode, encode, MAX_FRAME};

/// `Message::Error` codes.
pub mod error_code {
    pub const BAD_QUERY: u16 = 1;
    pub const NOT_READY: u16 = 2;
    pub const DUPLICATE_ID: u16 = 3;
    pub const DIMENSION: u16 = 4;
    pub const UNAVAILABLE: u16 = 5;
    pub const INTERNAL: u16 = 6;
    pub const UNEXPECTED: u16 = 7;
}

#[derive(Debug, Clone, PartialEq)]
pub struct Envelope {
    pub message_id: u64,
    /// The query id for query traffic, otherwise the `message_id` of the
    /// request being answered (0 on requests).
    pub correlation_id: u64,
    pub sender: String,
    pub payload: Message,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StatusReport {
    pub node_id: u32,
    pub ready: bool,
    pub records: u64,
    pub estimated_bytes: u64,
    /// Whether the probed id (if any) is stored on this node.
    pub probe_hit: bool,
    pub mbr: Option<Rect>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Message {
    QuerySubmit { client_id: u32, query: Query },
    QueryAck { query_id: u64 },
    ShardQuery { query_id: u64, query: Query },
    ShardResult { query_id: u64, node_id: u32, hits: Hits },
    QueryComplete(QueryResult),
    InsertRecord(CaseRecord),
    InsertAck { node_id: u32 },
    Error { code: u16, text: String },
    StatusRequest { probe: Option<RecordId> },
    StatusReport(StatusReport),
}

impl Message {
    pub fn name(&self) -> &'static str {
        match self {
            Message::QuerySubmit { .. } => "QuerySubmit",
            Message::QueryAck { .. } => "QueryAck",
            Message::ShardQuery { .. } => "ShardQuery",
            Message::ShardResult { .. } => "ShardResult",
            Message::QueryComplete(_) => "QueryComplete",
            Message::InsertRecord(_) => "InsertRecord",
            Message::InsertAck { .. } => "InsertAck",
            Message::Error { .. } => "Error",
            Message::StatusRequest { .. } => "StatusRequest",
            Message::StatusReport(_) => "StatusReport",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EncodeError {
    #[error("frame body of {0} bytes exceeds the 64 MiB limit")]
    TooLarge(usize),
    #[error("sender name of {0} bytes does not fit a u16 length")]
    SenderTooLong(usize),
    #[error("{field} of length {len} does not fit its length field")]
    FieldTooLong { field: &'static str, len: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DecodeError {
    #[error("unexpected end")]
    UnexpectedEnd,
    #[error("bad magic")]
    BadMagic,
    #[error("bad version {0}")]
    BadVersion(u8),
    #[error("length mismatch: declared {declared}, found {actual}")]
    LengthMismatch { declared: usize, actual: usize },
    #[error("unknown variant {0:#04x}")]
    UnknownVariant(u8),
    #[error("frame body of {0} bytes exceeds the 64 MiB limit")]
    TooLarge(usize),
    #[error("invalid UTF-8 in string field")]
    InvalidUtf8,
    #[error("invalid value: {0}")]
    InvalidValue(String),
}

impl DecodeError {
    /// Stable numeric code per error kind.
    pub fn code(&self) -> u16 {
        match self {
            DecodeError::UnexpectedEnd => 1,
            DecodeError::BadMagic => 2,
            DecodeError::BadVersion(_) => 3,
            DecodeError::LengthMismatch { .. } => 4,
            DecodeError::UnknownVariant(_) => 5,
            DecodeError::TooLarge(_) => 6,
            DecodeError::InvalidUtf8 => 7,
            DecodeError::InvalidValue(_) => 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TransportError {
    #[error("unknown node '{0}'")]
    UnknownNode(String),
    #[error(transparent)]
    Encode(#[from] EncodeError),
    #[error(transparent)]
    Decode(#[from] DecodeError),
    #[error("i/o: {0}")]
    Io(String),
    #[error("endpoint closed")]
    Closed,
}

/// One named participant on a fabric.
pub trait Endpoint: Send + Sync {
    fn name(&self) -> &str;

    fn send(&self, to: &str, env: &Envelope) -> Result<(), TransportError>;

    /// Next delivered envelope, or `None` once `timeout` passes.
    fn recv_timeout(&self, timeout: Duration) -> Result<Option<Envelope>, TransportError>;
}
