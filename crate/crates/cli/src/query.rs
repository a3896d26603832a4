use std::net::SocketAddr;
use std::path::PathBuf;
use std::time::{Duration, Instant};

use clap::{Args, ValueEnum};

use caseidx::cluster::store::load_store;
use caseidx::cluster::{CoordinatorConfig, FabricKind, LocalCluster, RemoteClient};
use caseidx::geom::Point;
use caseidx::model::{Hits, Query, QueryResult};

use crate::fail::Failure;
use crate::Outcome;

#[derive(Clone, Copy, ValueEnum)]
pub enum Kind {
    Knn,
    Range,
}

#[derive(Args)]
pub struct QueryArgs {
    kind: Kind,
    /// Query center, comma-separated coordinates.
    #[arg(long, allow_hyphen_values = true)]
    at: String,
    /// Neighbor count for knn.
    #[arg(long)]
    k: Option<usize>,
    /// Radius for range.
    #[arg(long)]
    radius: Option<f64>,
    /// Load this store into an in-process cluster.
    #[arg(long, conflicts_with = "coordinator", required_unless_present = "coordinator")]
    store: Option<PathBuf>,
    /// Address of a running coordinator.
    #[arg(long)]
    coordinator: Option<SocketAddr>,
    #[arg(long, default_value_t = 1)]
    client_id: u32,
    /// Run the same query this many times (later runs may hit the cache).
    #[arg(long, default_value_t = 1)]
    repeat: usize,
    /// Shard reply deadline in milliseconds.
    #[arg(long, default_value_t = 5000)]
    timeout_ms: u64,
}

fn parse_point(s: &str) -> Result<Point, Failure> {
    let coords = s
        .split(',')
        .map(|c| {
            c.trim()
                .parse::<f64>()
                .map_err(|_| Failure::usage(format!("bad coordinate '{c}' in --at")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Point::new(coords).map_err(|e| Failure::usage(format!("--at: {e}")))
}

fn build_query(a: &QueryArgs) -> Result<Query, Failure> {
    let center = parse_point(&a.at)?;
    match a.kind {
        Kind::Knn => {
            let k = a.k.ok_or_else(|| Failure::usage("knn needs --k"))?;
            Ok(Query::knn(center, k))
        }
        Kind::Range => {
            let r = a.radius.ok_or_else(|| Failure::usage("range needs --radius"))?;
            Ok(Query::range(center, r))
        }
    }
}

fn print_result(r: &QueryResult, elapsed: Duration) {
    match &r.hits {
        Hits::Knn(ns) => {
            println!("{:>5}  {:>20}  {:>14}", "rank", "id", "distance");
            for (i, n) in ns.iter().enumerate() {
                println!("{:>5}  {:>20}  {:>14.6}", i + 1, n.id.0, n.distance);
            }
        }
        Hits::Range(ids) => {
            println!("{:>5}  {:>20}", "#", "id");
            for (i, id) in ids.iter().enumerate() {
                println!("{:>5}  {:>20}", i + 1, id.0);
            }
        }
    }
    if r.degraded() {
        eprintln!("warning: degraded result, shards {:?} did not answer", r.missing_shards);
    }
    let missing: Vec<String> = r.missing_shards.iter().map(u32::to_string).collect();
    println!(
        "result query_id={} elapsed_s={:.6} from_cache={} degraded={} hits={} missing_shards={}",
        r.query_id,
        elapsed.as_secs_f64(),
        r.from_cache,
        r.degraded(),
        r.hits.len(),
        missing.join(";")
    );
}

pub fn run(a: QueryArgs) -> Outcome {
    let query = build_query(&a)?;
    if a.repeat == 0 {
        return Err(Failure::usage("--repeat must be at least 1"));
    }
    let timeout = Duration::from_millis(a.timeout_ms);
    let mut ask: Box<dyn FnMut(Query) -> Result<QueryResult, Failure>> = match (&a.store, a.coordinator) {
        (Some(dir), _) => {
            let (manifest, nodes) = load_store(dir)?;
            let mut cfg = CoordinatorConfig::new(manifest.tree.dimension);
            cfg.strategy = manifest.strategy;
            cfg.timeout = timeout;
            query.validate(cfg.dimension).map_err(Failure::usage)?;
            let cluster = LocalCluster::start(nodes, cfg, FabricKind::InProcess { seed: 0 })?;
            let client = a.client_id;
            Box::new(move |q| Ok(cluster.coordinator().query(client, q)?))
        }
        (None, Some(addr)) => {
            let mut client = RemoteClient::connect(addr, a.client_id, timeout + Duration::from_secs(1))?;
            Box::new(move |q| Ok(client.query(q)?))
        }
        (None, None) => return Err(Failure::usage("give --store or --coordinator")),
    };
    for _ in 0..a.repeat {
        let started = Instant::now();
        let r = ask(query.clone())?;
        print_result(&r, started.elapsed());
    }
    Ok(())
}
