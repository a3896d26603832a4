//! proptest strategies for wire envelopes.

use caseidx::geom::{Point, Rect};
use caseidx::model::{CaseRecord, Hits, Neighbor, Query, QueryResult, RecordId, Status};
use caseidx::transport::{Envelope, Message, StatusReport};
use proptest::collection::vec;
use proptest::prelude::*;

fn point(dim: usize) -> impl Strategy<Value = Point> {
    vec(-1e6f64..1e6, dim).prop_map(|c| Point::new(c).unwrap())
}

fn any_point() -> impl Strategy<Value = Point> {
    (1usize..4).prop_flat_map(point)
}

fn query() -> impl Strategy<Value = Query> {
    prop_oneof![
        (any_point(), 0usize..10_000).prop_map(|(c, k)| Query::knn(c, k)),
        (any_point(), 0.0f64..1e4).prop_map(|(c, r)| Query::range(c, r)),
    ]
}

fn hits() -> impl Strategy<Value = Hits> {
    prop_oneof![
        vec((any::<u64>(), 0.0f64..1e9), 0..20).prop_map(|v| Hits::Knn(
            v.into_iter()
                .map(|(id, d)| Neighbor {
                    id: RecordId(id),
                    distance: d
                })
                .collect()
        )),
        vec(any::<u64>(), 0..20).prop_map(|v| Hits::Range(v.into_iter().map(RecordId).collect())),
    ]
}

fn record() -> impl Strategy<Value = CaseRecord> {
    (
        any::<u64>(),
        any_point(),
        0usize..5,
        proptest::option::of(any::<i64>()),
        vec((".{0,8}", ".{0,8}"), 0..4),
    )
        .prop_map(|(id, position, s, event_day, attributes)| CaseRecord {
            id: RecordId(id),
            position,
            status: Status::ALL[s],
            event_day,
            attributes,
        })
}

fn message() -> impl Strategy<Value = Message> {
    prop_oneof![
        (any::<u32>(), query()).prop_map(|(client_id, query)| Message::QuerySubmit { client_id, query }),
        any::<u64>().prop_map(|query_id| Message::QueryAck { query_id }),
        (any::<u64>(), query()).prop_map(|(query_id, query)| Message::ShardQuery { query_id, query }),
        (any::<u64>(), any::<u32>(), hits()).prop_map(|(query_id, node_id, hits)| Message::ShardResult {
            query_id,
            node_id,
            hits
        }),
        (
            any::<u64>(),
            hits(),
            any::<bool>(),
            any::<u32>(),
            vec(any::<u32>(), 0..5),
            any::<u64>()
        )
            .prop_map(
                |(query_id, hits, from_cache, shard_count, missing_shards, duplicates_removed)| {
                    Message::QueryComplete(QueryResult {
                        query_id,
                        hits,
                        from_cache,
                        shard_count,
                        missing_shards,
                        duplicates_removed,
                    })
                }
            ),
        record().prop_map(Message::InsertRecord),
        any::<u32>().prop_map(|node_id| Message::InsertAck { node_id }),
        (any::<u16>(), ".{0,30}").prop_map(|(code, text)| Message::Error { code, text }),
        proptest::option::of(any::<u64>()).prop_map(|p| Message::StatusRequest { probe: p.map(RecordId) }),
        (
            any::<u32>(),
            any::<bool>(),
            any::<u64>(),
            any::<u64>(),
            any::<bool>(),
            proptest::option::of(point(2))
        )
            .prop_map(|(node_id, ready, records, estimated_bytes, probe_hit, corner)| {
                Message::StatusReport(StatusReport {
                    node_id,
                    ready,
                    records,
                    estimated_bytes,
                    probe_hit,
                    mbr: corner.map(|c| Rect::from_point(&c)),
                })
            }),
    ]
}

pub fn envelope() -> impl Strategy<Value = Envelope> {
    (any::<u64>(), any::<u64>(), ".{0,12}", message()).prop_map(|(message_id, correlation_id, sender, payload)| {
        Envelope {
            message_id,
            correlation_id,
            sender,
            payload,
        }
    })
}
