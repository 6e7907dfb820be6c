use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_welllog-ssl"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> PathBuf {
    let out = bin(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    PathBuf::from(String::from_utf8_lossy(&out.stdout).trim())
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Small four-class synthetic run; returns the gen directory.
fn generate(out: &Path) -> PathBuf {
    ok(&[
        "gen",
        "--out",
        s(out),
        "--seed",
        "4",
        "--dim",
        "4",
        "--labeled-counts",
        "12,12,12,12",
        "--pool-counts",
        "25,10,10,25",
    ])
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.records()
        .map(|rec| rec.unwrap().iter().map(str::to_string).collect())
        .collect()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn usage_errors_exit_2_with_one_line() {
    let out = bin(&["train", "--no-such-flag"]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr(&out);
    assert!(err.starts_with("error: usage: "), "{err}");
    assert_eq!(err.trim_end().lines().count(), 1);

    let out = bin(&["train", "--out", "/tmp/unused"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("--labeled"));
}

#[test]
fn missing_input_exits_1() {
    let tmp = tempfile::tempdir().unwrap();
    let out = bin(&[
        "train",
        "--out",
        s(tmp.path()),
        "--labeled",
        "/nonexistent/labels.csv",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).starts_with("error: "));
}

#[test]
fn config_replay_rejects_overrides_and_changed_inputs() {
    let tmp = tempfile::tempdir().unwrap();
    let gen = generate(tmp.path());
    let work = tmp.path().join("copy.csv");
    fs::copy(gen.join("labeled.csv"), &work).unwrap();
    let train = ok(&[
        "train",
        "--out",
        s(tmp.path()),
        "--labeled",
        s(&work),
        "--epochs",
        "20",
        "--k",
        "2",
        "--repeats",
        "1",
    ]);
    let config = train.join("resolved_config.json");

    let out = bin(&[
        "train",
        "--out",
        s(tmp.path()),
        "--config",
        s(&config),
        "--epochs",
        "5",
    ]);
    assert_eq!(out.status.code(), Some(2));

    let out = bin(&["selftrain", "--out", s(tmp.path()), "--config", s(&config)]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));

    let mut text = fs::read_to_string(&work).unwrap();
    let row = text.lines().nth(1).unwrap().to_owned();
    text.push_str(&row);
    text.push('\n');
    fs::write(&work, text).unwrap();
    let out = bin(&["train", "--out", s(tmp.path()), "--config", s(&config)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("copy.csv"), "{}", stderr(&out));
}

#[test]
fn selftrain_outputs_are_consistent() {
    let tmp = tempfile::tempdir().unwrap();
    let gen = generate(tmp.path());
    let run = ok(&[
        "selftrain",
        "--out",
        s(tmp.path()),
        "--seed",
        "2",
        "--labeled",
        s(&gen.join("labeled.csv")),
        "--pool",
        s(&gen.join("pool.csv")),
        "--epochs",
        "150",
        "--truth",
        s(&gen.join("truth.csv")),
    ]);
    let pool = csv_rows(&gen.join("pool.csv")).len();

    let assignment = csv_rows(&run.join("assignment.csv"));
    assert_eq!(assignment.len(), pool);
    for (i, row) in assignment.iter().enumerate() {
        assert_eq!(row[0], i.to_string());
        assert!(["strong", "weak"].contains(&row[4].as_str()));
    }

    let report = json(&run.join("report.json"));
    let pool_counts = &report["buckets_pool"]["counts"];
    let json_total: u64 = pool_counts
        .as_array()
        .unwrap()
        .iter()
        .flat_map(|r| r.as_array().unwrap())
        .map(|v| v.as_u64().unwrap())
        .sum();
    assert_eq!(json_total as usize, pool);
    let table6 = csv_rows(&run.join("table6.csv"));
    let sum = table6.last().unwrap();
    assert_eq!(sum[0], "sum");
    assert_eq!(sum[2], pool.to_string());
    let class_sum: usize = sum[3..].iter().map(|v| v.parse::<usize>().unwrap()).sum();
    assert_eq!(class_sum, pool);

    let table8 = csv_rows(&run.join("table8.csv"));
    for (row, entry) in table8.iter().zip(report["comparison"].as_array().unwrap()) {
        assert_eq!(row[0], entry["classifier"].as_str().unwrap());
        let counts: Vec<String> = entry["counts"]
            .as_array()
            .unwrap()
            .iter()
            .map(|v| v.to_string())
            .collect();
        assert_eq!(&row[1..5], counts.as_slice());
    }

    let dynamics = csv_rows(&run.join("fig3.csv"));
    assert!(!dynamics.is_empty());
    for row in &dynamics {
        let total: usize = row[1].parse::<usize>().unwrap() + row[2].parse::<usize>().unwrap();
        assert_eq!(total, 48 + pool);
    }
}

#[test]
fn empty_pool_gives_one_dynamics_row() {
    let tmp = tempfile::tempdir().unwrap();
    let gen = generate(tmp.path());
    let header = fs::read_to_string(gen.join("pool.csv"))
        .unwrap()
        .lines()
        .next()
        .unwrap()
        .to_string();
    let empty = tmp.path().join("empty.csv");
    fs::write(&empty, format!("{header}\n")).unwrap();
    let run = ok(&[
        "selftrain",
        "--out",
        s(tmp.path()),
        "--labeled",
        s(&gen.join("labeled.csv")),
        "--pool",
        s(&empty),
        "--epochs",
        "50",
    ]);
    let dynamics = csv_rows(&run.join("fig3.csv"));
    assert_eq!(dynamics.len(), 1);
    assert_eq!(dynamics[0][1..], ["48".to_string(), "0".to_string()]);
    assert!(csv_rows(&run.join("assignment.csv")).is_empty());
}

#[test]
fn report_merges_runs_and_flags_gaps() {
    let tmp = tempfile::tempdir().unwrap();
    let gen = generate(tmp.path());
    let (l, p) = (gen.join("labeled.csv"), gen.join("pool.csv"));
    let st = ok(&[
        "selftrain",
        "--out",
        s(tmp.path()),
        "--labeled",
        s(&l),
        "--pool",
        s(&p),
        "--epochs",
        "100",
    ]);

    let out = bin(&["report", "--out", s(tmp.path()), s(&st)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("table2"), "{}", stderr(&out));

    let train = ok(&[
        "train",
        "--out",
        s(tmp.path()),
        "--labeled",
        s(&l),
        "--epochs",
        "50",
        "--k",
        "3",
        "--repeats",
        "2",
    ]);
    let cmp = ok(&[
        "compare",
        "--out",
        s(tmp.path()),
        "--labeled",
        s(&l),
        "--pool",
        s(&p),
        "--epochs",
        "50",
        "--k",
        "3",
        "--repeats",
        "2",
        "--reference",
        s(&st),
    ]);
    let merged = ok(&["report", "--out", s(tmp.path()), s(&train), s(&st), s(&cmp)]);
    for n in 2..=8 {
        assert!(merged.join(format!("table{n}.csv")).is_file(), "table{n}");
        assert!(merged.join(format!("table{n}.txt")).is_file(), "table{n}");
    }
    for n in 1..=4 {
        assert!(merged.join(format!("fig{n}.csv")).is_file(), "fig{n}");
    }

    let table3 = csv_rows(&merged.join("table3.csv"));
    let expert = table3.last().unwrap();
    assert_eq!(expert[1..], ["12", "12", "12", "12"]);
    for row in &table3 {
        let total: usize = row[1..5].iter().map(|v| v.parse::<usize>().unwrap()).sum();
        assert_eq!(total, 48, "{row:?}");
    }
    let table8 = csv_rows(&merged.join("table8.csv"));
    assert_eq!(table8.len(), 7);
    let pool = csv_rows(&p).len();
    for row in &table8 {
        let total: usize = row[1..5].iter().map(|v| v.parse::<usize>().unwrap()).sum();
        assert_eq!(total, pool, "{row:?}");
        let agree: usize = row[6].parse().unwrap();
        assert!(agree <= pool);
    }
}
