//! Benchmark harness: index time, KNN time, range time, space and accuracy
//! over synthetic or CSV data, written as a metrics CSV.
//!
//! | experiment      | parameter     | measures                                  |
//! |-----------------|---------------|-------------------------------------------|
//! | `exp1_index`    | `records`     | partition + build seconds for that size   |
//! | `exp2_knn`      | `k`           | mean seconds per KNN query                |
//! | `exp3_range`    | `radius`      | mean seconds per range query              |
//! | `exp4_space`    | `records`     | estimated index bytes for that size       |
//! | `exp5_accuracy` | `k`           | share of oracle neighbors returned        |
//!
//! Accuracy is `|answer ∩ oracle| / |oracle|` summed over a run's queries,
//! where the oracle is a linear scan ranked by (distance, id).

pub mod oracle;
mod synth;

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::cluster::{ClusterError, CoordinatorConfig, FabricKind, LocalCluster, StoringNode};
use crate::config::{ConfigError, KvConfig};
use crate::ingest::{self, ColumnMapping, IngestError, Strategy, DEFAULT_SHARDS};
use crate::model::{CaseRecord, Query};
use crate::rplus::{TreeConfig, DEFAULT_MAX_ENTRIES};

pub use synth::{Distribution, SyntheticSpec, DEFAULT_EXTENT};

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("invalid bench spec: {0}")]
    Spec(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
    #[error("metrics output: {0}")]
    Output(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Experiment {
    IndexTime,
    KnnTime,
    RangeTime,
    Space,
    Accuracy,
}

impl Experiment {
    pub const ALL: [Experiment; 5] = [
        Experiment::IndexTime,
        Experiment::KnnTime,
        Experiment::RangeTime,
        Experiment::Space,
        Experiment::Accuracy,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::IndexTime => "exp1_index",
            Experiment::KnnTime => "exp2_knn",
            Experiment::RangeTime => "exp3_range",
            Experiment::Space => "exp4_space",
            Experiment::Accuracy => "exp5_accuracy",
        }
    }
}

impl FromStr for Experiment {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let s = s.trim();
        Experiment::ALL
            .into_iter()
            .enumerate()
            .find(|(i, e)| s == e.name() || s == (i + 1).to_string())
            .map(|(_, e)| e)
            .ok_or_else(|| format!("unknown experiment '{s}'"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Synthetic(SyntheticSpec),
    Csv { path: PathBuf, mapping: ColumnMapping },
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchSpec {
    pub source: DataSource,
    pub n_shards: usize,
    pub strategy: Strategy,
    pub max_entries: usize,
    pub k_values: Vec<usize>,
    pub radius_min: f64,
    pub radius_max: f64,
    pub radius_steps: usize,
    pub repetitions: usize,
    /// Queries per (parameter, run) in experiments 2, 3 and 5.
    pub queries: usize,
    /// Dataset sizes for experiments 1 and 4.
    pub sizes: Vec<usize>,
    pub accuracy_k: usize,
    /// Seed for query centers.
    pub seed: u64,
    pub experiments: Vec<Experiment>,
    pub output: Option<PathBuf>,
}

const SPEC_KEYS: &[&str] = &[
    "dataset",
    "mapping",
    "records",
    "seed",
    "distribution",
    "clusters",
    "spread",
    "dimension",
    "shards",
    "strategy",
    "max_entries",
    "k",
    "radius_min",
    "radius_max",
    "radius_steps",
    "repetitions",
    "queries",
    "sizes",
    "accuracy_k",
    "experiments",
    "output",
];

impl BenchSpec {
    /// Synthetic uniform data of `records` points with every default.
    pub fn synthetic(records: usize, seed: u64) -> Self {
        BenchSpec {
            source: DataSource::Synthetic(SyntheticSpec::uniform(records, seed)),
            n_shards: DEFAULT_SHARDS,
            strategy: Strategy::Chunk,
            max_entries: DEFAULT_MAX_ENTRIES,
            k_values: vec![1000, 2000, 2500, 4000],
            radius_min: 0.1,
            radius_max: 50.0,
            radius_steps: 8,
            repetitions: 1,
            queries: 10,
            sizes: vec![229, 1_501, 14_470],
            accuracy_k: 3000,
            seed,
            experiments: Experiment::ALL.to_vec(),
            output: None,
        }
    }

    /// Reads a spec from key-value config. Relative `dataset`, `mapping` and
    /// `output` paths resolve against `base`.
    ///
    /// ```text
    /// dataset = synthetic            # or a CSV path (then `mapping` is required)
    /// records = 10000                # synthetic only
    /// seed = 42
    /// distribution = uniform         # or clustered
    /// shards = 25
    /// k = 1000, 2000, 2500, 4000
    /// radius_min = 0.1
    /// radius_max = 50.0
    /// radius_steps = 8
    /// repetitions = 3
    /// queries = 10
    /// sizes = 229, 1501, 14470
    /// accuracy_k = 3000
    /// experiments = 1, 2, 3, 4, 5
    /// output = metrics.csv
    /// ```
    pub fn from_config(c: &KvConfig, base: &Path) -> Result<Self, BenchError> {
        c.reject_unknown(SPEC_KEYS)?;
        let seed = c.parsed_or("seed", 42u64)?;
        let mut spec = BenchSpec::synthetic(c.parsed_or("records", 10_000usize)?, seed);
        spec.source = match c.get("dataset").unwrap_or("synthetic") {
            "synthetic" => {
                let mut s = SyntheticSpec::uniform(c.parsed_or("records", 10_000usize)?, seed);
                s.dimension = c.parsed_or("dimension", 2usize)?;
                s.distribution = c.parsed_or("distribution", Distribution::Uniform)?;
                if let Distribution::Clustered { clusters, spread } = &mut s.distribution {
                    *clusters = c.parsed_or("clusters", *clusters)?;
                    *spread = c.parsed_or("spread", *spread)?;
                }
                DataSource::Synthetic(s)
            }
            path => {
                let mapping = c.require("mapping")?;
                DataSource::Csv {
                    path: base.join(path),
                    mapping: ColumnMapping::load(&base.join(mapping))?,
                }
            }
        };
        spec.n_shards = c.parsed_or("shards", spec.n_shards)?;
        spec.strategy = c.parsed_or("strategy", spec.strategy)?;
        spec.max_entries = c.parsed_or("max_entries", spec.max_entries)?;
        if c.get("k").is_some() {
            spec.k_values = c.parsed_list("k")?;
        }
        spec.radius_min = c.parsed_or("radius_min", spec.radius_min)?;
        spec.radius_max = c.parsed_or("radius_max", spec.radius_max)?;
        spec.radius_steps = c.parsed_or("radius_steps", spec.radius_steps)?;
        spec.repetitions = c.parsed_or("repetitions", spec.repetitions)?;
        spec.queries = c.parsed_or("queries", spec.queries)?;
        if c.get("sizes").is_some() {
            spec.sizes = c.parsed_list("sizes")?;
        }
        spec.accuracy_k = c.parsed_or("accuracy_k", spec.accuracy_k)?;
        if c.get("experiments").is_some() {
            spec.experiments = c.parsed_list("experiments")?;
        }
        spec.output = c.get("output").map(|o| base.join(o));
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        let bad = |m: &str| Err(BenchError::Spec(m.to_string()));
        if let DataSource::Synthetic(s) = &self.source {
            if s.count == 0 {
                return bad("records must be positive");
            }
            if s.dimension == 0 {
                return bad("dimension must be positive");
            }
        }
        if self.n_shards == 0 {
            return bad("shards must be positive");
        }
        if self.repetitions == 0 || self.queries == 0 {
            return bad("repetitions and queries must be positive");
        }
        if self.experiments.is_empty() {
            return bad("no experiments selected");
        }
        if self.experiments.contains(&Experiment::KnnTime) && self.k_values.is_empty() {
            return bad("k list must not be empty for KNN runs");
        }
        if self.k_values.contains(&0) || self.accuracy_k == 0 {
            return bad("k values must be positive");
        }
        let sized = self
            .experiments
            .iter()
            .any(|e| matches!(e, Experiment::IndexTime | Experiment::Space));
        if sized && (self.sizes.is_empty() || self.sizes.contains(&0)) {
            return bad("sizes must be a non-empty list of positive counts");
        }
        if !(self.radius_min.is_finite() && self.radius_max.is_finite())
            || self.radius_min < 0.0
            || self.radius_max < self.radius_min
            || self.radius_steps == 0
        {
            return bad("radius ladder needs 0 <= radius_min <= radius_max and radius_steps >= 1");
        }
        TreeConfig::with_max_entries(1, self.max_entries)
            .validate()
            .map_err(|e| BenchError::Spec(e.to_string()))
    }

    /// Radii from `radius_min` to `radius_max`, evenly spaced on a log scale
    /// (linear when `radius_min` is 0).
    pub fn radii(&self) -> Vec<f64> {
        let n = self.radius_steps;
        if n == 1 {
            return vec![self.radius_min];
        }
        (0..n)
            .map(|i| {
                let t = i as f64 / (n - 1) as f64;
                if i == n - 1 {
                    self.radius_max
                } else if self.radius_min > 0.0 {
                    self.radius_min * (self.radius_max / self.radius_min).powf(t)
                } else {
                    self.radius_min + (self.radius_max - self.radius_min) * t
                }
            })
            .collect()
    }
}

/// One line of the metrics file.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub experiment: &'static str,
    pub dataset: String,
    pub records: u64,
    pub parameter_name: &'static str,
    pub parameter: f64,
    pub run: usize,
    pub elapsed_s: f64,
    pub space_bytes: u64,
    /// Present for the query experiments only.
    pub accuracy: Option<f64>,
    pub cache_hits: u64,
    pub cache_misses: u64,
}

pub const METRICS_HEADER: [&str; 11] = [
    "experiment",
    "dataset",
    "records",
    "parameter_name",
    "parameter",
    "run",
    "elapsed_s",
    "space_bytes",
    "accuracy",
    "cache_hits",
    "cache_misses",
];

impl MetricsRow {
    fn fields(&self) -> [String; 11] {
        [
            self.experiment.to_string(),
            self.dataset.clone(),
            self.records.to_string(),
            self.parameter_name.to_string(),
            self.parameter.to_string(),
            self.run.to_string(),
            format!("{:.9}", self.elapsed_s),
            self.space_bytes.to_string(),
            self.accuracy.map_or(String::new(), |a| a.to_string()),
            self.cache_hits.to_string(),
            self.cache_misses.to_string(),
        ]
    }
}

impl fmt::Display for MetricsRow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.fields().join(","))
    }
}

pub fn write_metrics(out: impl std::io::Write, rows: &[MetricsRow]) -> Result<(), BenchError> {
    let mut w = csv::Writer::from_writer(out);
    let err = |e: csv::Error| BenchError::Output(e.to_string());
    w.write_record(METRICS_HEADER).map_err(err)?;
    for r in rows {
        w.write_record(r.fields()).map_err(err)?;
    }
    w.flush().map_err(|e| BenchError::Output(e.to_string()))
}

struct Data {
    name: String,
    records: Vec<CaseRecord>,
    synthetic: Option<SyntheticSpec>,
    dimension: usize,
}

fn load_data(spec: &BenchSpec) -> Result<Data, BenchError> {
    match &spec.source {
        DataSource::Synthetic(s) => Ok(Data {
            name: format!("synthetic-{}-{}", s.count, s.seed),
            records: s.generate(),
            synthetic: Some(s.clone()),
            dimension: s.dimension,
        }),
        DataSource::Csv { path, mapping } => {
            let (records, _) = ingest::parse_csv(path, mapping)?;
            if records.is_empty() {
                return Err(BenchError::Spec(format!("{} holds no usable records", path.display())));
            }
            Ok(Data {
                name: path
                    .file_name()
                    .map_or_else(|| "csv".into(), |n| n.to_string_lossy().into_owned()),
                records,
                synthetic: None,
                dimension: mapping.dimension(),
            })
        }
    }
}

impl Data {
    /// The first `n` records, or a fresh synthetic set of that size.
    fn sized(&self, n: usize) -> Vec<CaseRecord> {
        match &self.synthetic {
            Some(s) => SyntheticSpec { count: n, ..s.clone() }.generate(),
            None => self.records.iter().take(n).cloned().collect(),
        }
    }

    fn query_centers(&self, rng: &mut ChaCha8Rng, n: usize) -> Vec<crate::geom::Point> {
        use rand::Rng;
        match &self.synthetic {
            Some(s) => (0..n).map(|_| s.random_point(rng)).collect(),
            None => (0..n)
                .map(|_| self.records[rng.gen_range(0..self.records.len())].position.clone())
                .collect(),
        }
    }
}

fn build_nodes(records: Vec<CaseRecord>, spec: &BenchSpec, dim: usize) -> Result<Vec<StoringNode>, BenchError> {
    let config = TreeConfig::with_max_entries(dim, spec.max_entries);
    let parts = ingest::partition(records, spec.n_shards, spec.strategy)?;
    let trees = ingest::build_shards(&parts, config, true)?;
    parts
        .into_iter()
        .zip(trees)
        .map(|(p, t)| StoringNode::from_parts(p.id, t, p.records).map_err(|e| BenchError::Cluster(e.into())))
        .collect()
}

/// Runs the selected experiments, calling `on_row` as each row is produced.
pub fn run_bench(spec: &BenchSpec, mut on_row: impl FnMut(&MetricsRow)) -> Result<Vec<MetricsRow>, BenchError> {
    spec.validate()?;
    let data = load_data(spec)?;
    let mut rows = Vec::new();
    let mut emit = |r: MetricsRow, rows: &mut Vec<MetricsRow>| {
        on_row(&r);
        rows.push(r);
    };

    let mut experiments = spec.experiments.clone();
    experiments.sort_unstable();
    experiments.dedup();

    for &exp in experiments
        .iter()
        .filter(|e| matches!(e, Experiment::IndexTime | Experiment::Space))
    {
        for &size in &spec.sizes {
            let records = data.sized(size);
            let n = records.len() as u64;
            for run in 0..spec.repetitions {
                let started = Instant::now();
                let nodes = build_nodes(records.clone(), spec, data.dimension)?;
                let elapsed = started.elapsed().as_secs_f64();
                let space: u64 = nodes.iter().map(|n| n.stats().estimated_bytes).sum();
                let row = MetricsRow {
                    experiment: exp.name(),
                    dataset: data.name.clone(),
                    records: n,
                    parameter_name: "records",
                    parameter: n as f64,
                    run,
                    elapsed_s: elapsed,
                    space_bytes: space,
                    accuracy: None,
                    cache_hits: 0,
                    cache_misses: 0,
                };
                emit(row, &mut rows);
            }
        }
    }

    let query_exps: Vec<Experiment> = experiments
        .iter()
        .copied()
        .filter(|e| matches!(e, Experiment::KnnTime | Experiment::RangeTime | Experiment::Accuracy))
        .collect();
    if query_exps.is_empty() {
        return Ok(rows);
    }
    let nodes = build_nodes(data.records.clone(), spec, data.dimension)?;
    let space: u64 = nodes.iter().map(|n| n.stats().estimated_bytes).sum();
    let cluster = LocalCluster::start(
        nodes,
        CoordinatorConfig::new(data.dimension),
        FabricKind::InProcess { seed: spec.seed },
    )?;
    let coord = cluster.coordinator();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    for exp in query_exps {
        let params: Vec<f64> = match exp {
            Experiment::KnnTime => spec.k_values.iter().map(|&k| k as f64).collect(),
            Experiment::RangeTime => spec.radii(),
            _ => vec![spec.accuracy_k as f64],
        };
        for &p in &params {
            for run in 0..spec.repetitions {
                let centers = data.query_centers(&mut rng, spec.queries);
                let queries: Vec<Query> = centers
                    .into_iter()
                    .map(|c| match exp {
                        Experiment::RangeTime => Query::range(c, p),
                        _ => Query::knn(c, p as usize),
                    })
                    .collect();
                let before = coord.stats();
                let started = Instant::now();
                let mut answers = Vec::with_capacity(queries.len());
                for q in &queries {
                    answers.push(coord.query(0, q.clone())?);
                }
                let elapsed = started.elapsed().as_secs_f64() / queries.len() as f64;
                let after = coord.stats();
                let (mut matched, mut total) = (0, 0);
                for (q, a) in queries.iter().zip(&answers) {
                    let truth = oracle::linear_answer(&data.records, q);
                    let (m, t) = oracle::accuracy(&a.hits, &truth);
                    matched += m;
                    total += t;
                }
                let acc = if total == 0 { 1.0 } else { matched as f64 / total as f64 };
                let row = MetricsRow {
                    experiment: exp.name(),
                    dataset: data.name.clone(),
                    records: data.records.len() as u64,
                    parameter_name: if exp == Experiment::RangeTime { "radius" } else { "k" },
                    parameter: p,
                    run,
                    elapsed_s: elapsed,
                    space_bytes: space,
                    accuracy: Some(acc),
                    cache_hits: after.cache_hits - before.cache_hits,
                    cache_misses: after.cache_misses - before.cache_misses,
                };
                emit(row, &mut rows);
            }
        }
    }
    Ok(rows)
}
