use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use clap::Args;

use caseidx::bench::{run_bench, write_metrics, BenchSpec, Experiment};
use caseidx::config::KvConfig;

use crate::fail::Failure;
use crate::Outcome;

#[derive(Args)]
pub struct BenchArgs {
    /// Bench spec file (key-value). Flags below override it.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Synthetic record count.
    #[arg(long)]
    records: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    shards: Option<usize>,
    /// Comma-separated, e.g. `1,2,5` or `exp2_knn`.
    #[arg(long, value_delimiter = ',')]
    experiments: Vec<Experiment>,
    #[arg(long)]
    repetitions: Option<usize>,
    #[arg(long)]
    queries: Option<usize>,
    /// Metrics CSV path. Defaults to the spec's `output`, else stdout.
    #[arg(long)]
    output: Option<PathBuf>,
}

fn spec_from(a: &BenchArgs) -> Result<BenchSpec, Failure> {
    let mut spec = match &a.spec {
        Some(path) => {
            let base = path.parent().map(PathBuf::from).unwrap_or_default();
            BenchSpec::from_config(&KvConfig::load(path)?, &base)?
        }
        None => BenchSpec::synthetic(10_000, 42),
    };
    if a.records.is_some() || a.seed.is_some() {
        if let caseidx::bench::DataSource::Synthetic(s) = &mut spec.source {
            s.count = a.records.unwrap_or(s.count);
            s.seed = a.seed.unwrap_or(s.seed);
        } else if a.records.is_some() {
            return Err(Failure::usage("--records only applies to synthetic data"));
        }
    }
    if let Some(seed) = a.seed {
        spec.seed = seed;
    }
    if let Some(n) = a.shards {
        spec.n_shards = n;
    }
    if !a.experiments.is_empty() {
        spec.experiments = a.experiments.clone();
    }
    if let Some(r) = a.repetitions {
        spec.repetitions = r;
    }
    if let Some(q) = a.queries {
        spec.queries = q;
    }
    if a.output.is_some() {
        spec.output = a.output.clone();
    }
    spec.validate()?;
    Ok(spec)
}

pub fn run(a: BenchArgs) -> Outcome {
    let spec = spec_from(&a)?;
    let rows = run_bench(&spec, |r| {
        eprintln!(
            "{} {}={} run={} elapsed_s={:.6}",
            r.experiment, r.parameter_name, r.parameter, r.run, r.elapsed_s
        )
    })?;
    match &spec.output {
        Some(path) => {
            let f = File::create(path).map_err(|e| Failure::runtime(format!("{}: {e}", path.display())))?;
            let mut w = BufWriter::new(f);
            write_metrics(&mut w, &rows)?;
            w.flush().map_err(Failure::runtime)?;
            eprintln!("wrote {} rows to {}", rows.len(), path.display());
        }
        None => write_metrics(std::io::stdout().lock(), &rows)?,
    }
    Ok(())
}
