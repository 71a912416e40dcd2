use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn sot(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sot"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("spawn sot")
}

fn parse_csv(text: &str) -> Vec<Vec<f64>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect()
}

#[test]
fn two_rows_transform_to_all_ones() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("f.csv"), "1,0\n0,1\n").unwrap();
    let out = sot(dir.path(), &["transform", "f.csv"]);
    assert!(out.status.success());
    assert_eq!(parse_csv(&String::from_utf8(out.stdout).unwrap()), vec![vec![1.0, 1.0], vec![1.0, 1.0]]);
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("n=2") && err.contains("marginal_err"), "{err}");
}

#[test]
fn malformed_line_exits_2_and_names_line() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("f.csv"), "1,2,3\n1,2,x\n").unwrap();
    let out = sot(dir.path(), &["transform", "f.csv"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8(out.stderr).unwrap().contains("line 2"));
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(sot(dir.path(), &["transform"]).status.code(), Some(2));
    assert_eq!(sot(dir.path(), &["transform", "missing.csv"]).status.code(), Some(2));
    assert_eq!(sot(dir.path(), &["cluster-bench", "--dims", ""]).status.code(), Some(2));
}

#[test]
fn numeric_failure_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("f.csv"), "1,0\n0,0\n").unwrap();
    assert_eq!(sot(dir.path(), &["transform", "f.csv"]).status.code(), Some(3));
}

#[test]
fn generate_then_transform_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let gen = sot(
        dir.path(),
        &["generate", "--k", "3", "--points-per-cluster", "4", "--dim", "6", "--sigma", "0.2", "-o", "x.csv", "--labels", "y.txt"],
    );
    assert!(gen.status.success());
    let out = sot(dir.path(), &["transform", "x.csv", "-o", "w.csv"]);
    assert!(out.status.success());
    let w = parse_csv(&fs::read_to_string(dir.path().join("w.csv")).unwrap());
    assert_eq!(w.len(), 12);
    for (i, row) in w.iter().enumerate() {
        assert_eq!(row.len(), 12);
        assert_eq!(row[i], 1.0);
        assert!(row.iter().all(|&v| v >= 0.0));
        for (j, &v) in row.iter().enumerate() {
            assert_eq!(v, w[j][i]);
        }
    }
}

#[test]
fn noiseless_generate_groups_identical_rows() {
    let dir = tempfile::tempdir().unwrap();
    let gen = sot(
        dir.path(),
        &["generate", "--k", "3", "--points-per-cluster", "3", "--dim", "5", "--sigma", "0", "-o", "x.csv", "--labels", "y.txt"],
    );
    assert!(gen.status.success());
    let x = fs::read_to_string(dir.path().join("x.csv")).unwrap();
    let y = fs::read_to_string(dir.path().join("y.txt")).unwrap();
    let rows: Vec<&str> = x.lines().collect();
    let labels: Vec<&str> = y.lines().collect();
    assert_eq!(rows.len(), labels.len());
    for i in 0..rows.len() {
        for j in 0..rows.len() {
            assert_eq!(rows[i] == rows[j], labels[i] == labels[j]);
        }
    }
}

#[test]
fn one_cell_bench_writes_one_row_per_method() {
    let dir = tempfile::tempdir().unwrap();
    let out = sot(dir.path(), &["cluster-bench", "--dims", "8", "--sigmas", "0.2", "--seeds", "7", "-o", "g"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("g.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "dim,sigma,seed,method,accuracy,nmi,ari,wallclock_ms");
    assert_eq!(lines.len(), 3);
    assert!(lines[1].contains(",baseline,") && lines[2].contains(",sot,"));
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("g.json")).unwrap()).unwrap();
    assert_eq!(json["version"], 1);
    assert_eq!(json["rows"].as_array().unwrap().len(), 2);
}

#[test]
fn bench_csv_is_identical_across_worker_counts() {
    let dir = tempfile::tempdir().unwrap();
    let args = |w: &'static str, o: &'static str| {
        vec!["cluster-bench", "--dims", "10,60", "--sigmas", "0.2,0.4", "--n-seeds", "3", "--workers", w, "-o", o]
    };
    for (w, o) in [("1", "a"), ("4", "b"), ("4", "c")] {
        assert!(sot(dir.path(), &args(w, o)).status.success());
    }
    let a = fs::read(dir.path().join("a.csv")).unwrap();
    assert_eq!(a, fs::read(dir.path().join("b.csv")).unwrap());
    assert_eq!(a, fs::read(dir.path().join("c.csv")).unwrap());
}

#[test]
fn spec_file_is_read_and_unknown_fields_rejected() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("s.json"), r#"{"dims":[6],"sigmas":[0.1],"seeds":[1]}"#).unwrap();
    let out = sot(dir.path(), &["cluster-bench", "--spec", "s.json", "-o", "g"]);
    assert!(out.status.success());
    assert_eq!(fs::read_to_string(dir.path().join("g.csv")).unwrap().lines().count(), 3);
    fs::write(dir.path().join("bad.json"), r#"{"dimz":[6]}"#).unwrap();
    assert_eq!(sot(dir.path(), &["cluster-bench", "--spec", "bad.json"]).status.code(), Some(2));
}

#[test]
fn distances_and_episodes_emit_tables() {
    let dir = tempfile::tempdir().unwrap();
    sot(dir.path(), &["generate", "--dim", "20", "--sigma", "0.19", "-o", "x.csv", "--labels", "y.txt"]);
    let out = sot(dir.path(), &["distances", "x.csv", "y.txt"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("features,intra_mean"));
    assert_eq!(text.lines().count(), 3);

    let out = sot(dir.path(), &["episodes", "--count", "3", "--dim", "20", "--format", "json"]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["baseline"].as_array().unwrap().len(), 3);
}
