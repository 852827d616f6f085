use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn contrast(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_contrast")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) {
    let out = contrast(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn path(dir: &Path, name: &str) -> String {
    dir.join(name).display().to_string()
}

/// 60 rows: `x1` = 0..59, `x2` alternating labels, `y` jumps at 30.
fn write_small(dir: &Path) -> String {
    let mut s = String::from("x1,x2,y,z,same\n");
    for i in 0..60 {
        let y = if i < 30 { 0.0 } else { 5.0 } + (i % 3) as f64;
        let label = if i % 2 == 0 { "a" } else { "b" };
        s.push_str(&format!("{i},{label},{y},{},{y}\n", (i % 3) as f64));
    }
    let p = path(dir, "small.csv");
    fs::write(&p, s).unwrap();
    p
}

#[test]
fn missing_required_flag_is_a_usage_error() {
    let out = contrast(&["contrast", "--data", "a.csv", "--out", "o"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unknown_measure_is_a_usage_error() {
    let out = contrast(&["contrast", "--data", "a.csv", "--y", "y", "--z", "z", "--measure", "median", "--out", "o"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unreadable_input_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = contrast(&[
        "contrast", "--data", &path(dir.path(), "absent.csv"), "--y", "y", "--z", "z", "--measure", "ad", "--out", &path(dir.path(), "o"),
    ]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn unknown_column_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_small(dir.path());
    let out = contrast(&["contrast", "--data", &data, "--y", "nope", "--z", "z", "--measure", "ad", "--out", &path(dir.path(), "o")]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn identical_outcomes_give_one_flat_region() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_small(dir.path());
    let out = path(dir.path(), "o");
    ok(&["contrast", "--data", &data, "--y", "y", "--z", "same", "--x", "x1,x2", "--categorical", "x2", "--measure", "mean-diff", "--min-node", "5", "--out", &out]);
    let regions = fs::read_to_string(dir.path().join("o/regions.tsv")).unwrap();
    assert_eq!(regions.lines().count(), 1, "{regions}");
    assert!(regions.starts_with("1\t0.000000\t60\t(all)"), "{regions}");
    let curve = fs::read_to_string(dir.path().join("o/curve.csv")).unwrap();
    assert_eq!(curve, "fraction,mean_discrepancy\n1,0\n");
}

#[test]
fn contrast_finds_the_jump() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_small(dir.path());
    let out = path(dir.path(), "o");
    ok(&["contrast", "--data", &data, "--y", "y", "--z", "z", "--x", "x1,x2", "--categorical", "x2", "--measure", "mean-diff", "--max-regions", "2", "--min-node", "5", "--out", &out]);
    let regions = fs::read_to_string(dir.path().join("o/regions.tsv")).unwrap();
    let first = regions.lines().next().unwrap();
    assert!(first.ends_with("x1 > 29.5"), "{regions}");
    let model: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("o/model.json")).unwrap()).unwrap();
    assert_eq!(model["config"]["max_regions"], 2);
}

#[test]
fn qq_reads_a_saved_tree() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_small(dir.path());
    let out = path(dir.path(), "o");
    ok(&["contrast", "--data", &data, "--y", "y", "--z", "z", "--x", "x1", "--measure", "ad", "--min-node", "10", "--out", &out]);
    let qq = path(dir.path(), "qq.csv");
    ok(&["qq", "--model", &path(dir.path(), "o/model.json"), "--data", &data, "--y", "y", "--z", "z", "--x", "x1", "--top", "2", "--out", &qq]);
    let text = fs::read_to_string(&qq).unwrap();
    assert!(text.starts_with("region_id,p,z_q,y_q\n"));
    assert!(text.lines().count() > 1);
}

#[test]
fn predict_keeps_row_order() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_small(dir.path());
    let out = path(dir.path(), "b");
    ok(&["boost", "--data", &data, "--y", "y", "--z", "z", "--x", "x1", "--trees", "20", "--alpha", "1", "--min-node", "5", "--max-regions", "2", "--out", &out]);
    // Rows reversed: predictions must follow.
    let text = fs::read_to_string(&data).unwrap();
    let mut lines: Vec<&str> = text.lines().collect();
    let header = lines.remove(0);
    lines.reverse();
    let reversed = path(dir.path(), "rev.csv");
    fs::write(&reversed, format!("{header}\n{}\n", lines.join("\n"))).unwrap();
    let (p1, p2) = (path(dir.path(), "p1.csv"), path(dir.path(), "p2.csv"));
    ok(&["predict", "--model", &path(dir.path(), "b/model.json"), "--data", &data, "--out", &p1]);
    ok(&["predict", "--model", &path(dir.path(), "b/model.json"), "--data", &reversed, "--out", &p2]);
    let a: Vec<String> = fs::read_to_string(&p1).unwrap().lines().skip(1).map(String::from).collect();
    let mut b: Vec<String> = fs::read_to_string(&p2).unwrap().lines().skip(1).map(String::from).collect();
    b.reverse();
    assert_eq!(a.len(), 60);
    assert_eq!(a, b);
    // A full-rate offset per side of the jump: z + 0 below, z + 5 above.
    let low: f64 = a[0].parse().unwrap();
    let high: f64 = a[59].parse().unwrap();
    assert!(low.abs() < 1e-9 && (high - 7.0).abs() < 1e-9, "{low} {high}");
}

#[test]
fn simulate_is_reproducible_and_reuses_parameters() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b, c) = (path(dir.path(), "a.csv"), path(dir.path(), "b.csv"), path(dir.path(), "c.csv"));
    ok(&["simulate", "--n", "50", "--seed", "4", "--out", &a]);
    ok(&["simulate", "--n", "50", "--seed", "4", "--out", &b]);
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    assert_eq!(fs::read(path(dir.path(), "a.json")).unwrap(), fs::read(path(dir.path(), "b.json")).unwrap());
    ok(&["simulate", "--n", "30", "--seed", "9", "--params", &path(dir.path(), "a.json"), "--out", &c]);
    let side_a: serde_json::Value = serde_json::from_str(&fs::read_to_string(path(dir.path(), "a.json")).unwrap()).unwrap();
    let side_c: serde_json::Value = serde_json::from_str(&fs::read_to_string(path(dir.path(), "c.json")).unwrap()).unwrap();
    assert_eq!(side_a["model"], side_c["model"]);
    assert_eq!(fs::read_to_string(&c).unwrap().lines().count(), 31);
}

#[test]
fn hetero_sidecar_reports_signal_to_noise() {
    let dir = tempfile::tempdir().unwrap();
    let out = path(dir.path(), "h.csv");
    ok(&["simulate", "--kind", "hetero", "--n", "400", "--seed", "2", "--out", &out]);
    let side: serde_json::Value = serde_json::from_str(&fs::read_to_string(path(dir.path(), "h.json")).unwrap()).unwrap();
    let snr = side["signal_to_noise"].as_f64().unwrap();
    assert!((snr - 3.0).abs() < 0.01, "{snr}");
    assert!(fs::read_to_string(&out).unwrap().starts_with("x1,x2,x3,x4,x5,x6,x7,x8,x9,x10,y,f,s\n"));
}

#[test]
fn thread_count_does_not_change_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let data = path(dir.path(), "d.csv");
    ok(&["simulate", "--n", "300", "--seed", "6", "--out", &data]);
    let mut outputs = Vec::new();
    for threads in ["1", "3"] {
        let out = path(dir.path(), &format!("t{threads}"));
        ok(&["distboost", "--data", &data, "--y", "y", "--trees", "8", "--seed", "1", "--threads", threads, "--out", &out]);
        let q = path(dir.path(), &format!("q{threads}.csv"));
        ok(&["predict", "--model", &format!("{out}/model.json"), "--data", &data, "--n", "100", "--quantiles", "0.1,0.9", "--threads", threads, "--out", &q]);
        outputs.push((fs::read(format!("{out}/model.json")).unwrap(), fs::read(format!("{out}/trace.csv")).unwrap(), fs::read(&q).unwrap()));
    }
    assert!(outputs[0] == outputs[1]);
}

#[test]
fn quantiles_outside_the_unit_interval_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = contrast(&["predict", "--model", &path(dir.path(), "m.json"), "--data", "d.csv", "--quantiles", "0.5,1.5", "--out", &path(dir.path(), "q.csv")]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn null_writes_summary_and_replicates() {
    let dir = tempfile::tempdir().unwrap();
    let data = path(dir.path(), "d.csv");
    ok(&["simulate", "--n", "200", "--seed", "3", "--out", &data]);
    let out = path(dir.path(), "n");
    ok(&["null", "--data", &data, "--y", "y", "--replicates", "4", "--out", &out]);
    let csv = fs::read_to_string(dir.path().join("n/null.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("n/null.json")).unwrap()).unwrap();
    assert_eq!(summary["replicates"], 4);
    assert!(summary["sd"].as_f64().unwrap() >= 0.0);
}
