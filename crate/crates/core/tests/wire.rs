mod common;

use common::arb::envelope;

use caseidx::geom::Point;
use caseidx::model::{CaseRecord, Hits, Neighbor, Query, QueryResult, RecordId, Status};
use caseidx::transport::{decode, encode, DecodeError, Envelope, Message};
use proptest::prelude::*;
use rand::Rng;

fn hex_fixture(name: &str) -> Vec<u8> {
    let text = std::fs::read_to_string(format!("{}/tests/fixtures/{name}", env!("CARGO_MANIFEST_DIR"))).unwrap();
    let digits: String = text.chars().filter(|c| c.is_ascii_hexdigit()).collect();
    (0..digits.len())
        .step_by(2)
        .map(|i| u8::from_str_radix(&digits[i..i + 2], 16).unwrap())
        .collect()
}

fn ack7() -> Envelope {
    Envelope {
        message_id: 1,
        correlation_id: 7,
        sender: "c".into(),
        payload: Message::QueryAck { query_id: 7 },
    }
}

#[test]
fn query_ack_golden_bytes() {
    let golden = hex_fixture("query_ack_7.hex");
    assert_eq!(encode(&ack7()).unwrap(), golden);
    assert_eq!(decode(&golden).unwrap(), ack7());
}

#[test]
fn unknown_future_variant_reports_its_tag() {
    let mut b = encode(&ack7()).unwrap();
    b[9] = 0x42;
    assert_eq!(decode(&b), Err(DecodeError::UnknownVariant(0x42)));
    assert_eq!(decode(&[]), Err(DecodeError::UnexpectedEnd));
    assert_eq!(decode(&[]).unwrap_err().to_string(), "unexpected end");
}

#[test]
fn every_truncation_is_unexpected_end() {
    let b = encode(&Envelope {
        message_id: 9,
        correlation_id: 9,
        sender: "shard-3".into(),
        payload: Message::InsertRecord(CaseRecord {
            id: RecordId(4),
            position: Point::xy(1.0, 2.0).unwrap(),
            status: Status::Recovered,
            event_day: Some(12),
            attributes: vec![("k".into(), "v".into())],
        }),
    })
    .unwrap();
    for cut in 0..b.len() {
        assert_eq!(decode(&b[..cut]), Err(DecodeError::UnexpectedEnd), "cut {cut}");
    }
}

#[test]
fn fuzzed_input_never_panics() {
    let mut r = common::rng(2024);
    let seeds: Vec<Vec<u8>> = [
        ack7(),
        Envelope {
            message_id: 2,
            correlation_id: 3,
            sender: "coordinator".into(),
            payload: Message::ShardQuery {
                query_id: 5,
                query: Query::knn(Point::xy(1.0, 2.0).unwrap(), 9),
            },
        },
        Envelope {
            message_id: 2,
            correlation_id: 3,
            sender: "x".into(),
            payload: Message::QueryComplete(QueryResult {
                query_id: 1,
                hits: Hits::Knn(vec![Neighbor {
                    id: RecordId(3),
                    distance: 1.0,
                }]),
                from_cache: false,
                shard_count: 2,
                missing_shards: vec![1],
                duplicates_removed: 0,
            }),
        },
    ]
    .iter()
    .map(|e| encode(e).unwrap())
    .collect();
    let mut errors = 0;
    for i in 0..20_000 {
        let bytes: Vec<u8> = if i % 2 == 0 {
            let n = r.gen_range(0..80);
            (0..n).map(|_| r.gen()).collect()
        } else {
            // mutate a valid frame so the decoder gets past the header
            let mut b = seeds[r.gen_range(0..seeds.len())].clone();
            for _ in 0..r.gen_range(1..4) {
                let at = r.gen_range(4..b.len());
                b[at] = r.gen();
            }
            if r.gen_bool(0.3) {
                b.truncate(r.gen_range(0..b.len()));
            }
            b
        };
        if let Ok(env) = decode(&bytes) {
            // anything accepted must be canonical
            assert_eq!(encode(&env).unwrap(), bytes);
        } else {
            errors += 1;
        }
    }
    assert!(errors > 10_000);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn round_trip_is_identity(env in envelope()) {
        let bytes = encode(&env).unwrap();
        let back = decode(&bytes).unwrap();
        prop_assert_eq!(&back, &env);
        prop_assert_eq!(encode(&back).unwrap(), bytes);
    }
}
