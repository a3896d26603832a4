//! A store directory: `manifest.conf` plus one `shard-<id>.idx` per node.
//!
//! The manifest is a key-value file:
//!
//! ```text
//! dataset = cases.csv
//! shards = 25
//! strategy = chunk
//! dimension = 2
//! max_entries = 64
//! min_fill = 25
//! rows_read = 10
//! rows_accepted = 8
//! rows_rejected = 2
//! records = 8
//! parse_seconds = 0.0004
//! build_seconds = 0.0011
//! ```

use std::path::{Path, PathBuf};
use std::time::Instant;

use super::node::{shard_file_name, NodeError, StoringNode};
use crate::config::{ConfigError, KvConfig};
use crate::ingest::{self, ColumnMapping, IngestError, IngestReport, Strategy};
use crate::rplus::TreeConfig;

pub const MANIFEST_FILE: &str = "manifest.conf";

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StoreError {
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("manifest: {0}")]
    Manifest(#[from] ConfigError),
    #[error("{file}: {source}")]
    Shard { file: String, source: NodeError },
    #[error("{file}: holds node {found}, expected {expected}")]
    WrongNode { file: String, expected: u32, found: u32 },
    #[error(transparent)]
    Ingest(#[from] IngestError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub dataset: String,
    pub shards: u32,
    pub strategy: Strategy,
    pub tree: TreeConfig,
    pub rows_read: u64,
    pub rows_accepted: u64,
    pub rows_rejected: u64,
    pub records: u64,
    pub parse_seconds: f64,
    pub build_seconds: f64,
}

const KEYS: &[&str] = &[
    "dataset",
    "shards",
    "strategy",
    "dimension",
    "max_entries",
    "min_fill",
    "rows_read",
    "rows_accepted",
    "rows_rejected",
    "records",
    "parse_seconds",
    "build_seconds",
];

impl Manifest {
    pub fn to_config(&self) -> KvConfig {
        let mut c = KvConfig::default();
        c.set("dataset", &self.dataset);
        c.set("shards", self.shards);
        c.set("strategy", self.strategy.as_str());
        c.set("dimension", self.tree.dimension);
        c.set("max_entries", self.tree.max_entries);
        c.set("min_fill", self.tree.min_fill);
        c.set("rows_read", self.rows_read);
        c.set("rows_accepted", self.rows_accepted);
        c.set("rows_rejected", self.rows_rejected);
        c.set("records", self.records);
        c.set("parse_seconds", self.parse_seconds);
        c.set("build_seconds", self.build_seconds);
        c
    }

    pub fn from_config(c: &KvConfig) -> Result<Self, ConfigError> {
        c.reject_unknown(KEYS)?;
        let req = |k: &str| -> Result<u64, ConfigError> {
            c.require(k)?;
            Ok(c.parsed::<u64>(k)?.expect("present"))
        };
        let strategy = c
            .get("strategy")
            .unwrap_or("chunk")
            .parse()
            .map_err(|message| ConfigError::Invalid {
                key: "strategy".into(),
                message,
            })?;
        Ok(Manifest {
            dataset: c.get("dataset").unwrap_or("").to_string(),
            shards: u32::try_from(req("shards")?).map_err(|e| ConfigError::Invalid {
                key: "shards".into(),
                message: e.to_string(),
            })?,
            strategy,
            tree: TreeConfig {
                dimension: req("dimension")? as usize,
                max_entries: req("max_entries")? as usize,
                min_fill: req("min_fill")? as usize,
            },
            rows_read: c.parsed_or("rows_read", 0)?,
            rows_accepted: c.parsed_or("rows_accepted", 0)?,
            rows_rejected: c.parsed_or("rows_rejected", 0)?,
            records: c.parsed_or("records", 0)?,
            parse_seconds: c.parsed_or("parse_seconds", 0.0)?,
            build_seconds: c.parsed_or("build_seconds", 0.0)?,
        })
    }
}

fn io(path: &Path, e: std::io::Error) -> StoreError {
    StoreError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

/// Writes every shard file, then the manifest. Returns the shard file paths.
pub fn write_store(dir: &Path, manifest: &Manifest, nodes: &[StoringNode]) -> Result<Vec<PathBuf>, StoreError> {
    std::fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
    let mut paths = Vec::with_capacity(nodes.len());
    for n in nodes {
        let path = n.save(dir).map_err(|source| StoreError::Shard {
            file: shard_file_name(n.node_id()),
            source,
        })?;
        paths.push(path);
    }
    let mpath = dir.join(MANIFEST_FILE);
    std::fs::write(&mpath, manifest.to_config().render()).map_err(|e| io(&mpath, e))?;
    Ok(paths)
}

pub fn read_manifest(dir: &Path) -> Result<Manifest, StoreError> {
    Ok(Manifest::from_config(&KvConfig::load(&dir.join(MANIFEST_FILE))?)?)
}

/// Loads shard `node_id` from `dir`.
pub fn load_shard(dir: &Path, node_id: u32) -> Result<StoringNode, StoreError> {
    let file = shard_file_name(node_id);
    let node = StoringNode::load(&dir.join(&file)).map_err(|source| StoreError::Shard {
        file: file.clone(),
        source,
    })?;
    if node.node_id() != node_id {
        return Err(StoreError::WrongNode {
            file,
            expected: node_id,
            found: node.node_id(),
        });
    }
    Ok(node)
}

/// Loads the manifest and every shard it lists.
pub fn load_store(dir: &Path) -> Result<(Manifest, Vec<StoringNode>), StoreError> {
    let manifest = read_manifest(dir)?;
    let nodes = (0..manifest.shards)
        .map(|id| load_shard(dir, id))
        .collect::<Result<Vec<_>, _>>()?;
    Ok((manifest, nodes))
}

#[derive(Debug, Clone, PartialEq)]
pub struct IngestOptions {
    pub shards: usize,
    pub strategy: Strategy,
    pub max_entries: usize,
    /// Build shard trees on the rayon pool. Output bytes do not depend on it.
    pub parallel: bool,
}

impl Default for IngestOptions {
    fn default() -> Self {
        IngestOptions {
            shards: ingest::DEFAULT_SHARDS,
            strategy: Strategy::Chunk,
            max_entries: crate::rplus::DEFAULT_MAX_ENTRIES,
            parallel: true,
        }
    }
}

#[derive(Debug)]
pub struct IngestOutcome {
    pub manifest: Manifest,
    pub report: IngestReport,
    pub files: Vec<PathBuf>,
}

/// Parses `input`, partitions it, builds one tree per shard and writes the
/// store to `out`.
pub fn ingest_store(
    input: &Path,
    mapping: &ColumnMapping,
    opts: &IngestOptions,
    out: &Path,
) -> Result<IngestOutcome, StoreError> {
    let tree = TreeConfig::with_max_entries(mapping.dimension(), opts.max_entries);
    tree.validate().map_err(|e| IngestError::Mapping(e.to_string()))?;
    let (records, report) = ingest::parse_csv(input, mapping)?;
    let count = records.len() as u64;

    let started = Instant::now();
    let parts = ingest::partition(records, opts.shards, opts.strategy)?;
    let trees = ingest::build_shards(&parts, tree, opts.parallel)?;
    let nodes = parts
        .into_iter()
        .zip(trees)
        .map(|(p, t)| {
            StoringNode::from_parts(p.id, t, p.records).map_err(|source| StoreError::Shard {
                file: shard_file_name(p.id),
                source,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let build_seconds = started.elapsed().as_secs_f64();

    let manifest = Manifest {
        dataset: input
            .file_name()
            .map_or_else(|| input.display().to_string(), |n| n.to_string_lossy().into_owned()),
        shards: nodes.len() as u32,
        strategy: opts.strategy,
        tree,
        rows_read: report.rows_read,
        rows_accepted: report.rows_accepted,
        rows_rejected: report.rows_rejected,
        records: count,
        parse_seconds: report.duration_secs,
        build_seconds,
    };
    let files = write_store(out, &manifest, &nodes)?;
    Ok(IngestOutcome {
        manifest,
        report,
        files,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Point;
    use crate::model::CaseRecord;

    #[test]
    fn store_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = TreeConfig::with_max_entries(2, 8);
        let nodes: Vec<StoringNode> = (0..3)
            .map(|s| {
                let recs = (0..20)
                    .map(|i| CaseRecord::at(s * 100 + i, Point::xy(i as f64, s as f64).unwrap()))
                    .collect();
                StoringNode::build(s as u32, cfg, recs).unwrap()
            })
            .collect();
        let m = Manifest {
            dataset: "synthetic".into(),
            shards: 3,
            strategy: Strategy::Spatial,
            tree: cfg,
            rows_read: 60,
            rows_accepted: 60,
            rows_rejected: 0,
            records: 60,
            parse_seconds: 0.5,
            build_seconds: 0.25,
        };
        let paths = write_store(dir.path(), &m, &nodes).unwrap();
        assert_eq!(paths[2].file_name().unwrap(), "shard-2.idx");
        let (back, loaded) = load_store(dir.path()).unwrap();
        assert_eq!(back, m);
        for (a, b) in nodes.iter().zip(&loaded) {
            assert_eq!(a.to_bytes(), b.to_bytes());
        }
        std::fs::remove_file(&paths[1]).unwrap();
        assert!(matches!(load_store(dir.path()), Err(StoreError::Shard { .. })));
    }
}
