//! `caseidx`: build, query, measure and serve a sharded R+-tree store.
//!
//! Exit codes: 0 ok, 1 runtime failure, 2 usage or config error.

mod bench;
mod fail;
mod ingest;
mod query;
mod serve;
mod stats;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use caseidx::ingest::Strategy;
use fail::Failure;

#[derive(Parser)]
#[command(
    name = "caseidx",
    version,
    about = "Sharded R+-tree index for geo-tagged case records"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a CSV, partition it and write one shard file per partition.
    Ingest(IngestArgs),
    /// Run a KNN or range query against a store or a running coordinator.
    Query(query::QueryArgs),
    /// Run the benchmark experiments and write a metrics CSV.
    Bench(bench::BenchArgs),
    /// Report estimated and on-disk size for each shard file in a store.
    Stats {
        /// Store directory.
        store: PathBuf,
    },
    /// Run a storing node or a coordinator from a config file.
    Serve { config: PathBuf },
}

#[derive(Args)]
pub struct IngestArgs {
    /// Input CSV with a header row.
    #[arg(long)]
    input: PathBuf,
    /// Column mapping file (key-value).
    #[arg(long)]
    mapping: PathBuf,
    #[arg(long, default_value_t = caseidx::ingest::DEFAULT_SHARDS)]
    shards: usize,
    /// chunk or spatial.
    #[arg(long, default_value = "chunk")]
    strategy: Strategy,
    #[arg(long, default_value_t = caseidx::rplus::DEFAULT_MAX_ENTRIES)]
    max_entries: usize,
    /// Output store directory.
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Ingest(a) => ingest::run(a),
        Command::Query(a) => query::run(a),
        Command::Bench(a) => bench::run(a),
        Command::Stats { store } => stats::run(&store),
        Command::Serve { config } => serve::run(&config),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code())
        }
    }
}

pub(crate) type Outcome = Result<(), Failure>;
