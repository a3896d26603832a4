//! Binary layouts of domain values, shared by the wire protocol and shard files.
//!
//! ```text
//! point     dim u16 (>= 1), dim × f64 (finite)
//! rect      min point, max point (same dim, min <= max per axis)
//! query     kind u8 (0 = knn, 1 = range), center point,
//!           knn: k u64 | range: radius f64
//! hits      kind u8 (0 = knn, 1 = range), count u32,
//!           knn: count × (id u64, distance f64) | range: count × id u64
//! record    id u64, position point, status u8, has_day u8 (0|1), [day i64],
//!           attribute count u32, count × (key str32, value str32)
//! result    query_id u64, from_cache u8 (0|1), shard_count u32,
//!           missing count u32, missing × u32, duplicates_removed u64, hits
//! str16     length u16, UTF-8 bytes
//! str32     length u32, UTF-8 bytes
//! ```
//!
//! Status codes: 0 confirmed, 1 suspected, 2 recovered, 3 dead, 4 unknown.

use crate::bytes::{PutBe, Reader, Truncated};
use crate::geom::{Point, Rect};
use crate::model::{CaseRecord, Hits, Neighbor, Query, QueryResult, RecordId, Status};

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum CodecError {
    Truncated,
    Utf8,
    Invalid(String),
}

impl From<Truncated> for CodecError {
    fn from(_: Truncated) -> Self {
        CodecError::Truncated
    }
}

type Res<T> = Result<T, CodecError>;

fn invalid<T>(msg: impl Into<String>) -> Res<T> {
    Err(CodecError::Invalid(msg.into()))
}

/// Caps a declared element count by what the remaining bytes could hold, so
/// a hostile count cannot force a huge allocation.
fn capacity(r: &Reader<'_>, count: usize, min_item: usize) -> usize {
    count.min(r.remaining() / min_item.max(1))
}

pub(crate) fn put_bool(out: &mut Vec<u8>, v: bool) {
    out.put_u8(u8::from(v));
}

pub(crate) fn get_bool(r: &mut Reader<'_>) -> Res<bool> {
    match r.u8()? {
        0 => Ok(false),
        1 => Ok(true),
        b => invalid(format!("boolean byte {b}")),
    }
}

pub(crate) fn put_str16(out: &mut Vec<u8>, s: &str) {
    out.put_u16(s.len() as u16);
    out.extend_from_slice(s.as_bytes());
}

pub(crate) fn get_str16(r: &mut Reader<'_>) -> Res<String> {
    let n = r.u16()? as usize;
    utf8(r.take(n)?)
}

pub(crate) fn put_str32(out: &mut Vec<u8>, s: &str) {
    out.put_u32(s.len() as u32);
    out.extend_from_slice(s.as_bytes());
}

pub(crate) fn get_str32(r: &mut Reader<'_>) -> Res<String> {
    let n = r.u32()? as usize;
    utf8(r.take(n)?)
}

fn utf8(b: &[u8]) -> Res<String> {
    String::from_utf8(b.to_vec()).map_err(|_| CodecError::Utf8)
}

pub(crate) fn put_point(out: &mut Vec<u8>, p: &Point) {
    out.put_u16(p.dim() as u16);
    for &c in p.coords() {
        out.put_f64(c);
    }
}

pub(crate) fn get_point(r: &mut Reader<'_>) -> Res<Point> {
    let dim = r.u16()? as usize;
    let mut coords = Vec::with_capacity(capacity(r, dim, 8));
    for _ in 0..dim {
        coords.push(r.f64()?);
    }
    Point::new(coords).map_err(|e| CodecError::Invalid(e.to_string()))
}

pub(crate) fn put_rect(out: &mut Vec<u8>, rect: &Rect) {
    put_point(out, rect.min());
    put_point(out, rect.max());
}

pub(crate) fn get_rect(r: &mut Reader<'_>) -> Res<Rect> {
    let min = get_point(r)?;
    let max = get_point(r)?;
    Rect::new(min, max).map_err(|e| CodecError::Invalid(e.to_string()))
}

pub(crate) fn put_query(out: &mut Vec<u8>, q: &Query) {
    match q {
        Query::Knn { center, k } => {
            out.put_u8(0);
            put_point(out, center);
            out.put_u64(*k as u64);
        }
        Query::Range { center, radius } => {
            out.put_u8(1);
            put_point(out, center);
            out.put_f64(*radius);
        }
    }
}

pub(crate) fn get_query(r: &mut Reader<'_>) -> Res<Query> {
    match r.u8()? {
        0 => {
            let center = get_point(r)?;
            let k = usize::try_from(r.u64()?).or_else(|_| invalid("k overflows"))?;
            Ok(Query::Knn { center, k })
        }
        1 => {
            let center = get_point(r)?;
            Ok(Query::Range {
                center,
                radius: r.f64()?,
            })
        }
        b => invalid(format!("query kind {b}")),
    }
}

pub(crate) fn put_hits(out: &mut Vec<u8>, hits: &Hits) {
    match hits {
        Hits::Knn(v) => {
            out.put_u8(0);
            out.put_u32(v.len() as u32);
            for n in v {
                out.put_u64(n.id.0);
                out.put_f64(n.distance);
            }
        }
        Hits::Range(v) => {
            out.put_u8(1);
            out.put_u32(v.len() as u32);
            for id in v {
                out.put_u64(id.0);
            }
        }
    }
}

pub(crate) fn get_hits(r: &mut Reader<'_>) -> Res<Hits> {
    let kind = r.u8()?;
    let count = r.u32()? as usize;
    match kind {
        0 => {
            let mut v = Vec::with_capacity(capacity(r, count, 16));
            for _ in 0..count {
                v.push(Neighbor {
                    id: RecordId(r.u64()?),
                    distance: r.f64()?,
                });
            }
            Ok(Hits::Knn(v))
        }
        1 => {
            let mut v = Vec::with_capacity(capacity(r, count, 8));
            for _ in 0..count {
                v.push(RecordId(r.u64()?));
            }
            Ok(Hits::Range(v))
        }
        b => invalid(format!("hits kind {b}")),
    }
}

pub(crate) fn put_record(out: &mut Vec<u8>, rec: &CaseRecord) {
    out.put_u64(rec.id.0);
    put_point(out, &rec.position);
    out.put_u8(rec.status.code());
    put_bool(out, rec.event_day.is_some());
    if let Some(d) = rec.event_day {
        out.put_i64(d);
    }
    out.put_u32(rec.attributes.len() as u32);
    for (k, v) in &rec.attributes {
        put_str32(out, k);
        put_str32(out, v);
    }
}

pub(crate) fn get_record(r: &mut Reader<'_>) -> Res<CaseRecord> {
    let id = RecordId(r.u64()?);
    let position = get_point(r)?;
    let code = r.u8()?;
    let status = Status::from_code(code).ok_or_else(|| CodecError::Invalid(format!("status code {code}")))?;
    let event_day = if get_bool(r)? { Some(r.i64()?) } else { None };
    let count = r.u32()? as usize;
    let mut attributes = Vec::with_capacity(capacity(r, count, 8));
    for _ in 0..count {
        attributes.push((get_str32(r)?, get_str32(r)?));
    }
    Ok(CaseRecord {
        id,
        position,
        status,
        event_day,
        attributes,
    })
}

pub(crate) fn put_result(out: &mut Vec<u8>, res: &QueryResult) {
    out.put_u64(res.query_id);
    put_bool(out, res.from_cache);
    out.put_u32(res.shard_count);
    out.put_u32(res.missing_shards.len() as u32);
    for &m in &res.missing_shards {
        out.put_u32(m);
    }
    out.put_u64(res.duplicates_removed);
    put_hits(out, &res.hits);
}

pub(crate) fn get_result(r: &mut Reader<'_>) -> Res<QueryResult> {
    let query_id = r.u64()?;
    let from_cache = get_bool(r)?;
    let shard_count = r.u32()?;
    let count = r.u32()? as usize;
    let mut missing_shards = Vec::with_capacity(capacity(r, count, 4));
    for _ in 0..count {
        missing_shards.push(r.u32()?);
    }
    Ok(QueryResult {
        query_id,
        from_cache,
        shard_count,
        missing_shards,
        duplicates_removed: r.u64()?,
        hits: get_hits(r)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn record_round_trip() {
        let rec = CaseRecord {
            id: RecordId(9),
            position: Point::xy(1.5, -2.0).unwrap(),
            status: Status::Dead,
            event_day: Some(-3),
            attributes: vec![("country".into(), "Korea".into()), ("sex".into(), String::new())],
        };
        let mut out = Vec::new();
        put_record(&mut out, &rec);
        let mut r = Reader::new(&out);
        assert_eq!(get_record(&mut r).unwrap(), rec);
        assert_eq!(r.remaining(), 0);
    }

    #[test]
    fn rejects_bad_bytes() {
        let mut out = Vec::new();
        put_point(&mut out, &Point::xy(1.0, 2.0).unwrap());
        out[2..10].copy_from_slice(&f64::NAN.to_be_bytes());
        assert!(matches!(get_point(&mut Reader::new(&out)), Err(CodecError::Invalid(_))));
        assert!(matches!(
            get_point(&mut Reader::new(&[0, 0])),
            Err(CodecError::Invalid(_))
        ));
        assert_eq!(get_bool(&mut Reader::new(&[2])), invalid("boolean byte 2"));
        assert_eq!(get_str16(&mut Reader::new(&[0, 2, 0xff, 0xfe])), Err(CodecError::Utf8));
        assert_eq!(
            get_hits(&mut Reader::new(&[0, 0xff, 0xff, 0xff, 0xff])),
            Err(CodecError::Truncated)
        );
    }
}
