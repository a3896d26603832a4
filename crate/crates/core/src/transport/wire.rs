//! Frame encoding.
//!
//! Every frame is a 4-byte big-endian body length followed by the body:
//!
//! ```text
//! offset  size  field
//! 0       4     magic "CXWP"
//! 4       1     version, currently 1
//! 5       1     variant tag (table below)
//! 6       8     message_id u64
//! 14      8     correlation_id u64
//! 22      2+n   sender, str16
//! 24+n    ...   payload
//! ```
//!
//! | tag  | variant        | payload                                            |
//! |------|----------------|----------------------------------------------------|
//! | 0x01 | QuerySubmit    | client_id u32, query                               |
//! | 0x02 | QueryAck       | query_id u64                                       |
//! | 0x03 | ShardQuery     | query_id u64, query                                |
//! | 0x04 | ShardResult    | query_id u64, node_id u32, hits                    |
//! | 0x05 | QueryComplete  | result                                             |
//! | 0x06 | InsertRecord   | record                                             |
//! | 0x07 | InsertAck      | node_id u32                                        |
//! | 0x08 | Error          | code u16, text str32                               |
//! | 0x09 | StatusRequest  | has_probe u8 (0\|1), [probe id u64]                |
//! | 0x0A | StatusReport   | node_id u32, ready u8, records u64, estimated_bytes u64, probe_hit u8, has_mbr u8, [mbr rect] |
//!
//! Value layouts (query, hits, record, result, rect) are in the crate's codec
//! documentation and the book's wire-protocol chapter. Decoding is strict:
//! booleans must be 0 or 1 and the body must be consumed exactly, so every
//! accepted frame re-encodes to the same bytes.

use crate::bytes::{PutBe, Reader};
use crate::codec::{self, CodecError};

use super::{DecodeError, EncodeError, Envelope, Message, StatusReport};

pub const MAGIC: &[u8; 4] = b"CXWP";
pub const VERSION: u8 = 1;
/// Largest accepted body, in bytes.
pub const MAX_FRAME: usize = 64 * 1024 * 1024;

impl From<CodecError> for DecodeError {
    fn from(e: CodecError) -> Self {
        match e {
            CodecError::Truncated => DecodeError::UnexpectedEnd,
            CodecError::Utf8 => DecodeError::InvalidUtf8,
            CodecError::Invalid(m) => DecodeError::InvalidValue(m),
        }
    }
}

impl From<crate::bytes::Truncated> for DecodeError {
    fn from(_: crate::bytes::Truncated) -> Self {
        DecodeError::UnexpectedEnd
    }
}

fn tag(msg: &Message) -> u8 {
    match msg {
        Message::QuerySubmit { .. } => 0x01,
        Message::QueryAck { .. } => 0x02,
        Message::ShardQuery { .. } => 0x03,
        Message::ShardResult { .. } => 0x04,
        Message::QueryComplete(_) => 0x05,
        Message::InsertRecord(_) => 0x06,
        Message::InsertAck { .. } => 0x07,
        Message::Error { .. } => 0x08,
        Message::StatusRequest { .. } => 0x09,
        Message::StatusReport(_) => 0x0A,
    }
}

/// Encodes one envelope as a complete frame, length prefix included.
pub fn encode(env: &Envelope) -> Result<Vec<u8>, EncodeError> {
    if env.sender.len() > u16::MAX as usize {
        return Err(EncodeError::SenderTooLong(env.sender.len()));
    }
    let mut out = vec![0u8; 4];
    out.extend_from_slice(MAGIC);
    out.put_u8(VERSION);
    out.put_u8(tag(&env.payload));
    out.put_u64(env.message_id);
    out.put_u64(env.correlation_id);
    codec::put_str16(&mut out, &env.sender);
    put_payload(&mut out, &env.payload)?;
    let body = out.len() - 4;
    if body > MAX_FRAME {
        return Err(EncodeError::TooLarge(body));
    }
    out[..4].copy_from_slice(&(body as u32).to_be_bytes());
    Ok(out)
}

fn check_len(what: &'static str, n: usize, max: usize) -> Result<(), EncodeError> {
    if n > max {
        return Err(EncodeError::FieldTooLong { field: what, len: n });
    }
    Ok(())
}

fn put_payload(out: &mut Vec<u8>, msg: &Message) -> Result<(), EncodeError> {
    match msg {
        Message::QuerySubmit { client_id, query } => {
            out.put_u32(*client_id);
            codec::put_query(out, query);
        }
        Message::QueryAck { query_id } => out.put_u64(*query_id),
        Message::ShardQuery { query_id, query } => {
            out.put_u64(*query_id);
            codec::put_query(out, query);
        }
        Message::ShardResult {
            query_id,
            node_id,
            hits,
        } => {
            check_len("hits", hits.len(), u32::MAX as usize)?;
            out.put_u64(*query_id);
            out.put_u32(*node_id);
            codec::put_hits(out, hits);
        }
        Message::QueryComplete(res) => {
            check_len("hits", res.hits.len(), u32::MAX as usize)?;
            codec::put_result(out, res);
        }
        Message::InsertRecord(rec) => {
            for (k, v) in &rec.attributes {
                check_len("attribute", k.len().max(v.len()), u32::MAX as usize)?;
            }
            codec::put_record(out, rec);
        }
        Message::InsertAck { node_id } => out.put_u32(*node_id),
        Message::Error { code, text } => {
            out.put_u16(*code);
            codec::put_str32(out, text);
        }
        Message::StatusRequest { probe } => {
            codec::put_bool(out, probe.is_some());
            if let Some(id) = probe {
                out.put_u64(id.0);
            }
        }
        Message::StatusReport(s) => {
            out.put_u32(s.node_id);
            codec::put_bool(out, s.ready);
            out.put_u64(s.records);
            out.put_u64(s.estimated_bytes);
            codec::put_bool(out, s.probe_hit);
            codec::put_bool(out, s.mbr.is_some());
            if let Some(r) = &s.mbr {
                codec::put_rect(out, r);
            }
        }
    }
    Ok(())
}

/// Decodes exactly one frame occupying all of `bytes`.
pub fn decode(bytes: &[u8]) -> Result<Envelope, DecodeError> {
    let mut r = Reader::new(bytes);
    let declared = r.u32()? as usize;
    if declared > MAX_FRAME {
        return Err(DecodeError::TooLarge(declared));
    }
    let actual = r.remaining();
    if actual < declared {
        return Err(DecodeError::UnexpectedEnd);
    }
    if actual > declared {
        return Err(DecodeError::LengthMismatch { declared, actual });
    }
    decode_body(&bytes[4..])
}

/// Decodes a frame body (everything after the length prefix).
pub fn decode_body(body: &[u8]) -> Result<Envelope, DecodeError> {
    let mut r = Reader::new(body);
    if r.take(4)? != MAGIC {
        return Err(DecodeError::BadMagic);
    }
    let version = r.u8()?;
    if version != VERSION {
        return Err(DecodeError::BadVersion(version));
    }
    let tag = r.u8()?;
    if !(0x01..=0x0A).contains(&tag) {
        return Err(DecodeError::UnknownVariant(tag));
    }
    let message_id = r.u64()?;
    let correlation_id = r.u64()?;
    let sender = codec::get_str16(&mut r)?;
    let payload = get_payload(&mut r, tag)?;
    if r.remaining() != 0 {
        return Err(DecodeError::LengthMismatch {
            declared: body.len(),
            actual: body.len() - r.remaining(),
        });
    }
    Ok(Envelope {
        message_id,
        correlation_id,
        sender,
        payload,
    })
}

fn get_payload(r: &mut Reader<'_>, tag: u8) -> Result<Message, DecodeError> {
    Ok(match tag {
        0x01 => Message::QuerySubmit {
            client_id: r.u32()?,
            query: codec::get_query(r)?,
        },
        0x02 => Message::QueryAck { query_id: r.u64()? },
        0x03 => Message::ShardQuery {
            query_id: r.u64()?,
            query: codec::get_query(r)?,
        },
        0x04 => Message::ShardResult {
            query_id: r.u64()?,
            node_id: r.u32()?,
            hits: codec::get_hits(r)?,
        },
        0x05 => Message::QueryComplete(codec::get_result(r)?),
        0x06 => Message::InsertRecord(codec::get_record(r)?),
        0x07 => Message::InsertAck { node_id: r.u32()? },
        0x08 => Message::Error {
            code: r.u16()?,
            text: codec::get_str32(r)?,
        },
        0x09 => Message::StatusRequest {
            probe: if codec::get_bool(r)? {
                Some(crate::model::RecordId(r.u64()?))
            } else {
                None
            },
        },
        0x0A => {
            let node_id = r.u32()?;
            let ready = codec::get_bool(r)?;
            let records = r.u64()?;
            let estimated_bytes = r.u64()?;
            let probe_hit = codec::get_bool(r)?;
            let mbr = if codec::get_bool(r)? {
                Some(codec::get_rect(r)?)
            } else {
                None
            };
            Message::StatusReport(StatusReport {
                node_id,
                ready,
                records,
                estimated_bytes,
                probe_hit,
                mbr,
            })
        }
        t => return Err(DecodeError::UnknownVariant(t)),
    })
}
