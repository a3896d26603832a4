use std::path::Path;

use caseidx::cluster::StoringNode;

use crate::fail::Failure;
use crate::Outcome;

fn shard_id(file_name: &str) -> Option<u32> {
    file_name.strip_prefix("shard-")?.strip_suffix(".idx")?.parse().ok()
}

pub fn run(dir: &Path) -> Outcome {
    let listing = std::fs::read_dir(dir).map_err(|e| Failure::runtime(format!("{}: {e}", dir.display())))?;
    let mut files: Vec<(u32, std::path::PathBuf)> = listing
        .filter_map(|e| e.ok())
        .filter_map(|e| Some((shard_id(e.file_name().to_str()?)?, e.path())))
        .collect();
    files.sort();

    println!(
        "{:>14}  {:>10}  {:>8}  {:>6}  {:>16}  {:>12}",
        "shard", "records", "nodes", "depth", "estimated_bytes", "file_bytes"
    );
    let (mut records, mut estimated, mut on_disk) = (0u64, 0u64, 0u64);
    let mut corrupt = Vec::new();
    for (id, path) in &files {
        let name = path.file_name().unwrap_or_default().to_string_lossy().into_owned();
        let bytes = std::fs::metadata(path).map(|m| m.len()).unwrap_or(0);
        on_disk += bytes;
        match StoringNode::load(path) {
            Ok(node) if node.node_id() == *id => {
                let s = node.stats();
                records += s.size;
                estimated += s.estimated_bytes;
                println!(
                    "{:>14}  {:>10}  {:>8}  {:>6}  {:>16}  {:>12}",
                    name, s.size, s.node_count, s.depth, s.estimated_bytes, bytes
                );
            }
            Ok(node) => {
                println!("{name:>14}  CORRUPT: holds node {}", node.node_id());
                corrupt.push(name);
            }
            Err(e) => {
                println!("{name:>14}  CORRUPT: {e}");
                corrupt.push(name);
            }
        }
    }
    println!(
        "{:>14}  {:>10}  {:>8}  {:>6}  {:>16}  {:>12}",
        "total", records, "", "", estimated, on_disk
    );
    if corrupt.is_empty() {
        Ok(())
    } else {
        Err(Failure::runtime(format!("corrupt shard files: {}", corrupt.join(", "))))
    }
}
