use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Output, Stdio};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_caseidx"))
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../core/tests/fixtures")
        .join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn text(b: &[u8]) -> String {
    String::from_utf8_lossy(b).into_owned()
}

fn ingest(input: &Path, mapping: &Path, shards: usize, out: &Path) -> Output {
    run(&[
        "ingest",
        "--input",
        input.to_str().unwrap(),
        "--mapping",
        mapping.to_str().unwrap(),
        "--shards",
        &shards.to_string(),
        "--out",
        out.to_str().unwrap(),
    ])
}

/// The trailing machine-readable line of a query, as key/value pairs.
fn result_lines(stdout: &str) -> Vec<Vec<(String, String)>> {
    stdout
        .lines()
        .filter_map(|l| l.strip_prefix("result "))
        .map(|l| {
            l.split_whitespace()
                .map(|kv| {
                    let (k, v) = kv.split_once('=').unwrap();
                    (k.to_string(), v.to_string())
                })
                .collect()
        })
        .collect()
}

fn field<'a>(line: &'a [(String, String)], key: &str) -> &'a str {
    &line.iter().find(|(k, _)| k == key).unwrap().1
}

fn grid_csv(path: &Path, n: usize) {
    let mut s = String::from("x,y\n");
    for i in 0..n {
        s.push_str(&format!(
            "{},{}\n",
            (i * 7919 % 1000) as f64 / 10.0,
            (i * 104_729 % 997) as f64 / 10.0
        ));
    }
    std::fs::write(path, s).unwrap();
}

#[test]
fn ingest_fixture_into_two_shards() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let out = ingest(&fixture("cases10.csv"), &fixture("cases10.map"), 2, &a);
    assert!(out.status.success(), "{}", text(&out.stderr));
    assert!(text(&out.stderr).contains("rejected line 5: missing coordinate"));
    assert!(a.join("shard-0.idx").exists() && a.join("shard-1.idx").exists());
    assert!(!a.join("shard-2.idx").exists());
    let manifest = std::fs::read_to_string(a.join("manifest.conf")).unwrap();
    assert!(manifest.lines().any(|l| l == "rows_accepted = 8"), "{manifest}");
    assert!(manifest.lines().any(|l| l.starts_with("build_seconds = ")));

    let b = dir.path().join("b");
    assert!(ingest(&fixture("cases10.csv"), &fixture("cases10.map"), 2, &b)
        .status
        .success());
    for f in ["shard-0.idx", "shard-1.idx"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap());
    }
}

#[test]
fn missing_column_exits_2_and_names_it() {
    let dir = tempfile::tempdir().unwrap();
    let map = dir.path().join("m.map");
    std::fs::write(&map, "coord_columns = lon, latitude\n").unwrap();
    let out = ingest(&fixture("cases10.csv"), &map, 2, &dir.path().join("s"));
    assert_eq!(out.status.code(), Some(2));
    assert!(text(&out.stderr).contains("'lon'"), "{}", text(&out.stderr));
}

#[test]
fn unreadable_input_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let out = ingest(
        &dir.path().join("nope.csv"),
        &fixture("cases10.map"),
        2,
        &dir.path().join("s"),
    );
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn query_local_store() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("one.csv");
    std::fs::write(&csv, "x,y\n3.5,-2\n").unwrap();
    let map = dir.path().join("m.map");
    std::fs::write(&map, "coord_columns = x, y\n").unwrap();
    let store = dir.path().join("s");
    assert!(ingest(&csv, &map, 1, &store).status.success());
    let s = store.to_str().unwrap();

    let out = run(&["query", "knn", "--at", "0,0", "--k", "1", "--store", s, "--repeat", "2"]);
    assert!(out.status.success(), "{}", text(&out.stderr));
    let stdout = text(&out.stdout);
    assert!(
        stdout
            .lines()
            .any(|l| l.split_whitespace().collect::<Vec<_>>() == ["1", "0", "4.031129"]),
        "{stdout}"
    );
    let lines = result_lines(&stdout);
    assert_eq!(lines.len(), 2);
    assert_eq!(field(&lines[0], "from_cache"), "false");
    assert_eq!(field(&lines[1], "from_cache"), "true");
    assert_eq!(field(&lines[1], "degraded"), "false");

    let out = run(&["query", "range", "--at", "1,1", "--radius", "0", "--store", s]);
    assert_eq!(field(&result_lines(&text(&out.stdout))[0], "hits"), "0");

    for bad in [
        &["query", "knn", "--at", "1,1", "--store", s][..],
        &["query", "range", "--at", "1,x", "--radius", "1", "--store", s],
        &["query", "range", "--at", "1,1", "--radius", "-1", "--store", s],
        &["query", "knn", "--at", "1,1,1", "--k", "1", "--store", s],
        &["query", "knn", "--at", "1,1", "--k", "1"],
        &["frobnicate"],
    ] {
        assert_eq!(run(bad).status.code(), Some(2), "{bad:?}");
    }
}

fn total_estimated(stdout: &str) -> u64 {
    let total = stdout.lines().find(|l| l.trim_start().starts_with("total")).unwrap();
    let cols: Vec<&str> = total.split_whitespace().collect();
    cols[2].parse().unwrap()
}

#[test]
fn stats_reports_sizes_and_corruption() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty");
    std::fs::create_dir(&empty).unwrap();
    let out = run(&["stats", empty.to_str().unwrap()]);
    assert!(out.status.success());
    let total = text(&out.stdout);
    assert_eq!(
        total.lines().last().unwrap().split_whitespace().collect::<Vec<_>>(),
        ["total", "0", "0", "0"]
    );

    let csv = dir.path().join("g.csv");
    grid_csv(&csv, 10_000);
    let map = dir.path().join("m.map");
    std::fs::write(&map, "coord_columns = x, y\n").unwrap();
    let mut totals = Vec::new();
    for shards in [5, 25] {
        let store = dir.path().join(format!("s{shards}"));
        assert!(ingest(&csv, &map, shards, &store).status.success());
        let out = run(&["stats", store.to_str().unwrap()]);
        assert!(out.status.success());
        totals.push(total_estimated(&text(&out.stdout)) as f64);
    }
    assert!(
        (totals[0] - totals[1]).abs() / totals[0].max(totals[1]) <= 0.15,
        "{totals:?}"
    );

    let victim = dir.path().join("s5/shard-3.idx");
    let mut bytes = std::fs::read(&victim).unwrap();
    bytes[0] ^= 0xff;
    std::fs::write(&victim, bytes).unwrap();
    let out = run(&["stats", dir.path().join("s5").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(
        text(&out.stdout).contains("shard-3.idx  CORRUPT"),
        "{}",
        text(&out.stdout)
    );
    assert!(text(&out.stderr).contains("shard-3.idx"));
}

#[test]
fn bench_writes_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("bench.conf");
    std::fs::write(
        &spec,
        "records = 2000\nseed = 3\nshards = 4\nk = 5, 50\nradius_steps = 3\nrepetitions = 3\nqueries = 2\n\
         sizes = 100, 400\naccuracy_k = 300\noutput = m.csv\n",
    )
    .unwrap();
    let out = run(&["bench", "--spec", spec.to_str().unwrap()]);
    assert!(out.status.success(), "{}", text(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("m.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "experiment,dataset,records,parameter_name,parameter,run,elapsed_s,space_bytes,accuracy,cache_hits,cache_misses"
    );
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    // 2 sizes + 2 k + 3 radii + 2 sizes + 1 accuracy, three runs each
    assert_eq!(rows.len(), (2 + 2 + 3 + 2 + 1) * 3);
    let runs: Vec<&str> = rows
        .iter()
        .filter(|r| r[0] == "exp2_knn" && r[4] == "5")
        .map(|r| r[5])
        .collect();
    assert_eq!(runs, ["0", "1", "2"]);
    for r in rows.iter().filter(|r| r[0] != "exp1_index" && r[0] != "exp4_space") {
        assert_eq!(r[8].parse::<f64>().unwrap(), 1.0, "{r:?}");
    }

    let out = run(&["bench", "--experiments", "2", "--records", "500", "--queries", "1"]);
    assert!(out.status.success());
    assert_eq!(text(&out.stdout).lines().count(), 1 + 4);

    std::fs::write(&spec, "records = 0\n").unwrap();
    assert_eq!(run(&["bench", "--spec", spec.to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(run(&["bench", "--experiments", "9"]).status.code(), Some(2));
}

struct Server(Child, String);

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

fn serve(config: &Path) -> Server {
    let mut child = bin()
        .args(["serve", config.to_str().unwrap()])
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stdout.as_mut().unwrap())
        .read_line(&mut line)
        .unwrap();
    let addr = line
        .split_whitespace()
        .nth(2)
        .unwrap_or_else(|| panic!("no address in '{line}'"))
        .to_string();
    Server(child, addr)
}

#[test]
fn serve_shards_and_coordinator() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("g.csv");
    grid_csv(&csv, 300);
    let map = dir.path().join("m.map");
    std::fs::write(&map, "coord_columns = x, y\n").unwrap();
    assert!(ingest(&csv, &map, 3, &dir.path().join("store")).status.success());

    let mut shards = Vec::new();
    for id in 0..3 {
        let conf = dir.path().join(format!("shard{id}.conf"));
        std::fs::write(
            &conf,
            format!("role = shard\nlisten = 127.0.0.1:0\nstore = store\nnode_id = {id}\n"),
        )
        .unwrap();
        shards.push(serve(&conf));
    }
    let list: Vec<String> = shards.iter().enumerate().map(|(i, s)| format!("{i}@{}", s.1)).collect();
    let conf = dir.path().join("coord.conf");
    std::fs::write(
        &conf,
        format!(
            "role = coordinator\nlisten = 127.0.0.1:0\nstore = store\nshards = {}\ntimeout_ms = 1500\n",
            list.join(", ")
        ),
    )
    .unwrap();
    let coord = serve(&conf);

    let local = run(&[
        "query",
        "knn",
        "--at",
        "50,50",
        "--k",
        "7",
        "--store",
        dir.path().join("store").to_str().unwrap(),
    ]);
    let remote = run(&[
        "query",
        "knn",
        "--at",
        "50,50",
        "--k",
        "7",
        "--coordinator",
        &coord.1,
        "--repeat",
        "2",
    ]);
    assert!(remote.status.success(), "{}", text(&remote.stderr));
    let table = |s: &str| {
        s.lines()
            .filter(|l| !l.starts_with("result"))
            .map(str::to_string)
            .collect::<Vec<_>>()
    };
    let remote_out = text(&remote.stdout);
    assert_eq!(table(&text(&local.stdout)), table(&remote_out)[..8].to_vec());
    assert_eq!(field(&result_lines(&remote_out)[1], "from_cache"), "true");

    drop(shards.remove(1));
    let out = run(&[
        "query",
        "range",
        "--at",
        "50,50",
        "--radius",
        "30",
        "--coordinator",
        &coord.1,
    ]);
    assert_eq!(out.status.code(), Some(0));
    let line = &result_lines(&text(&out.stdout))[0];
    assert_eq!(field(line, "degraded"), "true");
    assert_eq!(field(line, "missing_shards"), "1");
    assert!(text(&out.stderr).contains("degraded"));

    let bad = dir.path().join("bad.conf");
    std::fs::write(&bad, "role = gateway\nlisten = 127.0.0.1:0\n").unwrap();
    assert_eq!(run(&["serve", bad.to_str().unwrap()]).status.code(), Some(2));
}
