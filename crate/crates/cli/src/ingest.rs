use caseidx::cluster::store::{ingest_store, IngestOptions};
use caseidx::ingest::ColumnMapping;

use crate::{IngestArgs, Outcome};

pub fn run(a: IngestArgs) -> Outcome {
    let mapping = ColumnMapping::load(&a.mapping)?;
    let opts = IngestOptions {
        shards: a.shards,
        strategy: a.strategy,
        max_entries: a.max_entries,
        parallel: true,
    };
    let out = ingest_store(&a.input, &mapping, &opts, &a.out)?;
    for r in &out.report.rejections {
        eprintln!("rejected line {}: {}", r.line, r.reason);
    }
    let m = &out.manifest;
    println!(
        "read {} rows: {} accepted, {} rejected",
        m.rows_read, m.rows_accepted, m.rows_rejected
    );
    println!(
        "wrote {} shards ({}) to {} in {:.3}s",
        out.files.len(),
        m.strategy.as_str(),
        a.out.display(),
        m.build_seconds
    );
    Ok(())
}
