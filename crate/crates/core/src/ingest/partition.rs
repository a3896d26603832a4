use std::str::FromStr;

use rayon::prelude::*;

use super::IngestError;
use crate::model::CaseRecord;
use crate::rplus::{str_tile, RPlusTree, TreeConfig};

pub const DEFAULT_SHARDS: usize = 25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Strategy {
    /// Contiguous runs of the input order, sizes differing by at most one.
    #[default]
    Chunk,
    /// Sort-tile-recursive tiling, so shard regions do not share volume.
    Spatial,
}

impl Strategy {
    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Chunk => "chunk",
            Strategy::Spatial => "spatial",
        }
    }
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "chunk" => Ok(Strategy::Chunk),
            "spatial" => Ok(Strategy::Spatial),
            other => Err(format!("unknown partition strategy '{other}' (chunk|spatial)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    pub id: u32,
    pub records: Vec<CaseRecord>,
}

/// Splits records into exactly `n_shards` partitions with ids `0..n_shards`.
/// Every record lands in exactly one partition; some may be empty when there
/// are fewer records than shards.
pub fn partition(records: Vec<CaseRecord>, n_shards: usize, strategy: Strategy) -> Result<Vec<Partition>, IngestError> {
    if n_shards == 0 {
        return Err(IngestError::BadShardCount);
    }
    let groups: Vec<Vec<CaseRecord>> = match strategy {
        Strategy::Chunk => {
            let sizes = crate::rplus::balanced_sizes(records.len(), n_shards);
            let mut rest = records.into_iter();
            sizes.iter().map(|&n| rest.by_ref().take(n).collect()).collect()
        }
        Strategy::Spatial => {
            let dim = records.first().map_or(1, |r| r.position.dim());
            if let Some(bad) = records.iter().find(|r| r.position.dim() != dim) {
                return Err(IngestError::Mapping(format!(
                    "record {} has dimension {}, expected {dim}",
                    bad.id,
                    bad.position.dim()
                )));
            }
            str_tile(
                records,
                n_shards,
                dim,
                |r, axis| r.position.coord(axis),
                |a, b| a.position.lex_cmp(&b.position).then(a.id.cmp(&b.id)),
            )
        }
    };
    Ok(groups
        .into_iter()
        .enumerate()
        .map(|(i, records)| Partition { id: i as u32, records })
        .collect())
}

/// Bulk-loads one tree per partition, in partition order. With `parallel`
/// the builds run on the rayon pool; the output is identical either way.
pub fn build_shards(
    partitions: &[Partition],
    config: TreeConfig,
    parallel: bool,
) -> Result<Vec<RPlusTree>, IngestError> {
    let build = |p: &Partition| {
        RPlusTree::bulk_load(config, &p.records).map_err(|source| IngestError::Shard {
            partition_id: p.id,
            source,
        })
    };
    if parallel {
        partitions.par_iter().map(build).collect()
    } else {
        partitions.iter().map(build).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Point;
    use crate::rplus::TreeError;

    fn recs(n: u64) -> Vec<CaseRecord> {
        (0..n)
            .map(|i| CaseRecord::at(i, Point::xy((i * 7 % 13) as f64, (i * 5 % 11) as f64).unwrap()))
            .collect()
    }

    #[test]
    fn chunk_sizes() {
        let parts = partition(recs(10), 3, Strategy::Chunk).unwrap();
        let sizes: Vec<usize> = parts.iter().map(|p| p.records.len()).collect();
        assert_eq!(sizes, vec![4, 3, 3]);
        assert_eq!(parts[1].records[0].id.0, 4);
        let parts = partition(recs(2), 4, Strategy::Chunk).unwrap();
        assert_eq!(
            parts.iter().map(|p| p.records.len()).collect::<Vec<_>>(),
            vec![1, 1, 0, 0]
        );
        assert_eq!(partition(recs(2), 0, Strategy::Chunk), Err(IngestError::BadShardCount));
    }

    #[test]
    fn spatial_covers_every_record_once() {
        let parts = partition(recs(500), 7, Strategy::Spatial).unwrap();
        let mut ids: Vec<u64> = parts.iter().flat_map(|p| p.records.iter().map(|r| r.id.0)).collect();
        ids.sort_unstable();
        assert_eq!(ids, (0..500).collect::<Vec<_>>());
        let sizes: Vec<usize> = parts.iter().map(|p| p.records.len()).collect();
        assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
    }

    #[test]
    fn parallel_matches_sequential() {
        let parts = partition(recs(2000), 5, Strategy::Chunk).unwrap();
        let cfg = TreeConfig::with_max_entries(2, 8);
        assert_eq!(
            build_shards(&parts, cfg, true).unwrap(),
            build_shards(&parts, cfg, false).unwrap()
        );
    }

    #[test]
    fn build_error_names_partition() {
        let mut parts = partition(recs(20), 2, Strategy::Chunk).unwrap();
        parts[1].records[3].position = Point::new([1.0, 2.0, 3.0]).unwrap();
        match build_shards(&parts, TreeConfig::new(2), true) {
            Err(IngestError::Shard {
                partition_id: 1,
                source: TreeError::Dimension { .. },
            }) => {}
            other => panic!("{other:?}"),
        }
    }
}
