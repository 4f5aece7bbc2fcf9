use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::{Map, Value};

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_driftwatch"));
    cmd.env_remove("MON_STORE_ROOT").env_remove("MON_DATA_ROOT");
    cmd
}

fn run(store: &Path, args: &[&str]) -> Output {
    bin().arg("--store").arg(store).args(args).output().unwrap()
}

fn ok(store: &Path, args: &[&str]) -> String {
    let out = run(store, args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

/// Training rows for 2022-03-07 and inference rows for 2022-03-20.
fn write_data(dir: &Path) {
    let mut train = String::from("unit_id,eval_date,prediction,f1\n");
    let mut day = String::from("unit_id,eval_date,prediction,f1\n");
    for i in 0..200 {
        writeln!(train, "u{i},2022-03-07,{},{}", (i % 7) as f64 * 0.5, i as f64 / 10.0).unwrap();
        writeln!(day, "u{i},2022-03-20,{},{}", (i % 5) as f64 * 0.5, i as f64 / 10.0 + 3.0).unwrap();
    }
    std::fs::write(dir.join("train.csv"), train).unwrap();
    std::fs::write(dir.join("day.csv"), day).unwrap();
}

fn setup(dir: &Path) -> std::path::PathBuf {
    write_data(dir);
    let store = dir.join("store");
    ok(&store, &["register-model", "--id", "m1"]);
    ok(
        &store,
        &["set-monitor", "--model", "m1", "--id", "d1", "--kind", "drift", "--quantities", "f1,prediction"],
    );
    store
}

fn data_arg(dir: &Path, name: &str) -> String {
    dir.join(name).to_str().unwrap().to_string()
}

#[test]
fn happy_path_yields_two_records() {
    let dir = tempfile::tempdir().unwrap();
    let store = setup(dir.path());
    let train = data_arg(dir.path(), "train.csv");
    let day = data_arg(dir.path(), "day.csv");
    ok(&store, &["snapshot-baseline", "--model", "m1", "--monitor", "d1", "--data", &train]);
    ok(
        &store,
        &["run-monitor", "--model", "m1", "--monitor", "d1", "--date", "2022-03-20", "--data", &day],
    );
    let doc = ok(
        &store,
        &["get-metrics", "--model", "m1", "--monitor", "d1", "--from", "2022-03-20", "--to", "2022-03-20", "--format", "doc"],
    );
    let records: Vec<Value> = serde_json::from_str(&doc).unwrap();
    assert_eq!(records.len(), 2);
    let labels: Vec<&str> = records.iter().map(|r| r["context"]["quantity_label"].as_str().unwrap()).collect();
    assert_eq!(labels, ["f1", "prediction"]);

    let table = ok(&store, &["get-metrics", "--model", "m1", "--monitor", "d1"]);
    assert!(table.starts_with("eval_date"));
    // Header plus three metrics per record.
    assert_eq!(table.lines().count(), 7);
}

#[test]
fn run_before_snapshot_is_a_precondition_failure() {
    let dir = tempfile::tempdir().unwrap();
    let store = setup(dir.path());
    let day = data_arg(dir.path(), "day.csv");
    let out = run(
        &store,
        &["run-monitor", "--model", "m1", "--monitor", "d1", "--date", "2022-03-20", "--data", &day],
    );
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("precondition") && err.contains("baseline"), "{err}");
}

/// Rebuild documents from `record,field,value` rows.
fn from_csv(text: &str) -> Vec<Value> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let mut records: BTreeMap<usize, Value> = BTreeMap::new();
    for row in reader.records() {
        let row = row.unwrap();
        let index: usize = row[0].parse().unwrap();
        let leaf: Value = serde_json::from_str(&row[2]).unwrap();
        let doc = records.entry(index).or_insert(Value::Null);
        insert(doc, &row[1], leaf);
    }
    records.into_values().collect()
}

fn insert(doc: &mut Value, pointer: &str, leaf: Value) {
    if pointer.is_empty() {
        *doc = leaf;
        return;
    }
    let (head, rest) = match pointer[1..].find('/') {
        Some(i) => (&pointer[1..=i], &pointer[i + 1..]),
        None => (&pointer[1..], ""),
    };
    let key = head.replace("~1", "/").replace("~0", "~");
    if let Ok(i) = key.parse::<usize>() {
        if doc.is_null() {
            *doc = Value::Array(Vec::new());
        }
        if let Value::Array(items) = doc {
            if items.len() <= i {
                items.resize(i + 1, Value::Null);
            }
            insert(&mut items[i], rest, leaf);
            return;
        }
    }
    if doc.is_null() {
        *doc = Value::Object(Map::new());
    }
    let child = doc.as_object_mut().unwrap().entry(key).or_insert(Value::Null);
    insert(child, rest, leaf);
}

#[test]
fn csv_reparses_to_doc_and_is_stable() {
    let dir = tempfile::tempdir().unwrap();
    let store = setup(dir.path());
    let train = data_arg(dir.path(), "train.csv");
    let day = data_arg(dir.path(), "day.csv");
    ok(&store, &["snapshot-baseline", "--model", "m1", "--monitor", "d1", "--data", &train]);
    ok(&store, &["run-monitor", "--model", "m1", "--monitor", "d1", "--date", "2022-03-20", "--data", &day]);
    ok(&store, &["run-monitor", "--model", "m1", "--monitor", "d1", "--date", "2022-03-21", "--data", &day, "--all-rows"]);

    let args = ["get-metrics", "--model", "m1", "--monitor", "d1"];
    let doc: Vec<Value> = serde_json::from_str(&ok(&store, &[&args[..], &["--format", "doc"]].concat())).unwrap();
    let csv_text = ok(&store, &[&args[..], &["--format", "csv"]].concat());
    assert_eq!(doc.len(), 4);
    assert_eq!(from_csv(&csv_text), doc);
    assert_eq!(ok(&store, &[&args[..], &["--format", "csv"]].concat()), csv_text);

    let cfg = ["get-monitor", "--model", "m1", "--id", "d1"];
    let doc: Value = serde_json::from_str(&ok(&store, &[&cfg[..], &["--format", "doc"]].concat())).unwrap();
    assert_eq!(from_csv(&ok(&store, &[&cfg[..], &["--format", "csv"]].concat())), vec![doc]);
}

#[test]
fn roots_come_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let store = setup(dir.path());
    let out = bin()
        .env("MON_STORE_ROOT", &store)
        .env("MON_DATA_ROOT", dir.path())
        .args(["snapshot-baseline", "--model", "m1", "--monitor", "d1", "--data", "train.csv"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let table = String::from_utf8(out.stdout).unwrap();
    assert!(table.lines().any(|l| l.starts_with("prediction") && l.contains("200")), "{table}");

    let out = bin().args(["get-monitor", "--model", "m1", "--id", "d1"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn reactions_and_deletes_through_the_cli() {
    let dir = tempfile::tempdir().unwrap();
    let store = setup(dir.path());
    let train = data_arg(dir.path(), "train.csv");
    ok(&store, &["snapshot-baseline", "--model", "m1", "--monitor", "d1", "--data", &train]);
    ok(&store, &["run-monitor", "--model", "m1", "--monitor", "d1", "--date", "2022-03-07", "--data", &train]);

    let set = [
        "set-reaction", "--model", "m1", "--id", "bc", "--monitor", "d1", "--kind", "threshold",
        "--metric", "bhattacharyya_coefficient", "--comparator", "<", "--threshold", "0.9",
    ];
    // Setting is idempotent.
    assert_eq!(ok(&store, &set), ok(&store, &set));
    let logs: Vec<Value> = serde_json::from_str(&ok(
        &store,
        &["run-reaction", "--model", "m1", "--id", "bc", "--as-of", "2022-03-07", "--format", "doc"],
    ))
    .unwrap();
    assert_eq!(logs.len(), 2);
    assert!(logs.iter().all(|l| l["severity"] == "info" && l["body"]["fired"] == false));

    let missing = run(&store, &["set-reaction", "--model", "m1", "--id", "x", "--monitor", "d1", "--kind", "threshold"]);
    assert_eq!(missing.status.code(), Some(2));
    let bad_cmp = run(
        &store,
        &[
            "set-reaction", "--model", "m1", "--id", "x", "--monitor", "d1", "--kind", "threshold",
            "--metric", "m", "--comparator", "==", "--threshold", "1",
        ],
    );
    assert_eq!(bad_cmp.status.code(), Some(2));

    let del = |args: &[&str]| -> u64 {
        let out = ok(&store, &[&["delete"], args, &["--format", "doc"]].concat());
        serde_json::from_str::<Value>(&out).unwrap()["deleted"].as_u64().unwrap()
    };
    assert_eq!(del(&["logs", "--model", "m1", "--id", "bc", "--from", "2000-01-01", "--to", "2000-01-02"]), 0);
    assert_eq!(del(&["logs", "--model", "m1", "--id", "bc"]), 2);
    assert_eq!(del(&["logs", "--model", "m1", "--id", "bc"]), 0);
    assert_eq!(del(&["metrics", "--model", "m1", "--id", "d1", "--from", "2022-03-07"]), 2);
    let out = run(&store, &["delete", "monitor", "--model", "m1", "--id", "d1", "--from", "2022-03-07"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn synth_writes_three_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["--data-root", dir.path().to_str().unwrap(), "synth", "--out", "s", "--units", "50", "--format", "doc"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let doc: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(doc["spec"]["n_units"], 50);
    for name in ["training.csv", "daily_inference.csv", "daily_sales.csv"] {
        assert!(dir.path().join("s").join(name).is_file(), "{name}");
    }
}
