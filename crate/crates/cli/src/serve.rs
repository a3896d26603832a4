//! `serve` config, one key per line:
//!
//! ```text
//! role = shard                  # or coordinator
//! listen = 127.0.0.1:7001
//!
//! # shard
//! store = store                 # relative to this file
//! node_id = 3                   # serves shard-3.idx
//!
//! # coordinator
//! shards = 0@127.0.0.1:7001, 1@127.0.0.1:7002
//! store = store                 # optional: dimension and strategy from the manifest
//! dimension = 2                 # needed when there is no store
//! strategy = chunk
//! timeout_ms = 5000
//! cache_capacity = 1024
//! verify_cache = false
//! ```

use std::io::Write;
use std::net::SocketAddr;
use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use caseidx::cluster::store::{load_shard, read_manifest};
use caseidx::cluster::{shard_name, Coordinator, CoordinatorConfig, NodeHost, ShardRef, COORDINATOR_NAME};
use caseidx::config::{ConfigError, KvConfig};
use caseidx::transport::TcpEndpoint;

use crate::fail::Failure;
use crate::Outcome;

const KEYS: &[&str] = &[
    "role",
    "listen",
    "store",
    "node_id",
    "shards",
    "dimension",
    "strategy",
    "timeout_ms",
    "cache_capacity",
    "verify_cache",
];

fn bind(name: &str, listen: &str) -> Result<TcpEndpoint, Failure> {
    let ep = TcpEndpoint::bind(name, listen).map_err(|e| Failure::runtime(format!("bind {listen}: {e}")))?;
    println!("listening {name} {}", ep.local_addr());
    let _ = std::io::stdout().flush();
    Ok(ep)
}

fn parse_shard(entry: &str) -> Result<(u32, SocketAddr), Failure> {
    let bad = || Failure::usage(format!("shards entry '{entry}' must look like 3@host:port"));
    let (id, addr) = entry.split_once('@').ok_or_else(bad)?;
    Ok((
        id.trim().parse().map_err(|_| bad())?,
        addr.trim().parse().map_err(|_| bad())?,
    ))
}

pub fn run(path: &Path) -> Outcome {
    let c = KvConfig::load(path)?;
    c.reject_unknown(KEYS)?;
    let base = path.parent().unwrap_or(Path::new("."));
    let listen = c.require("listen")?;
    match c.require("role")? {
        "shard" => {
            let dir = base.join(c.require("store")?);
            let id: u32 = c
                .parsed("node_id")?
                .ok_or_else(|| ConfigError::Missing("node_id".into()))?;
            let node = load_shard(&dir, id)?;
            let ep = bind(&shard_name(id), listen)?;
            eprintln!("serving {} records", node.len());
            NodeHost::spawn(Arc::new(node), Arc::new(ep)).join();
            Ok(())
        }
        "coordinator" => {
            let manifest = c.get("store").map(|s| read_manifest(&base.join(s))).transpose()?;
            let dimension = match (c.parsed::<usize>("dimension")?, &manifest) {
                (Some(d), _) => d,
                (None, Some(m)) => m.tree.dimension,
                (None, None) => return Err(Failure::usage("coordinator needs dimension or store")),
            };
            let mut cfg = CoordinatorConfig::new(dimension);
            cfg.strategy = c.parsed_or("strategy", manifest.as_ref().map_or(cfg.strategy, |m| m.strategy))?;
            cfg.timeout = Duration::from_millis(c.parsed_or("timeout_ms", cfg.timeout.as_millis() as u64)?);
            cfg.cache_capacity = c.parsed_or("cache_capacity", cfg.cache_capacity)?;
            cfg.verify_cache = c.parsed_or("verify_cache", false)?;

            let ep = bind(COORDINATOR_NAME, listen)?;
            let mut shards = Vec::new();
            for entry in c.list("shards") {
                let (node_id, addr) = parse_shard(&entry)?;
                let name = shard_name(node_id);
                ep.add_peer(&name, addr);
                shards.push(ShardRef { node_id, name });
            }
            let _coordinator = Coordinator::start(Arc::new(ep), shards, cfg)?;
            loop {
                std::thread::park();
            }
        }
        other => Err(Failure::usage(format!(
            "role must be shard or coordinator, got '{other}'"
        ))),
    }
}
