use std::fs;
use std::process::{Command, Output};

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_collusion-sim"))
        .args(args)
        .output()
        .expect("binary runs")
}

#[test]
fn simulate_writes_a_trace() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("trace.jsonl");
    let o = bin(&["simulate", "--n", "20", "--pc", "0.9", "--colluding", "0.5", "--seed", "7", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(&out).unwrap();
    assert!(text.lines().next().unwrap().contains("\"schema\":\"collusion-trace\""));
    assert!(text.contains("\"record\":\"stats\""));

    let again = bin(&["simulate", "--pc", "0.9", "--colluding", "0.5", "--seed", "7"]);
    assert_eq!(String::from_utf8(again.stdout).unwrap(), text);
}

#[test]
fn sweep_writes_runs_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sweep");
    let o = bin(&[
        "sweep", "--colluding", "0.5", "--pc", "0.5,0.9", "--scheme", "serene,sne8", "--reps", "2",
        "--set", "sim_end=40", "--set", "collusion_start_window=3,20", "--out", out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(out.join("runs.csv")).unwrap();
    let mut lines = csv.lines();
    let header = lines.next().unwrap();
    assert!(header.starts_with("schema_version,scheme,"));
    // 2 cells + 2 controls, 2 schemes, 2 reps.
    assert_eq!(lines.count(), 16);
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["schema"], "collusion-summary");
    assert_eq!(summary["runs"], 16);

    let report = bin(&["report", out.join("runs.csv").to_str().unwrap()]);
    assert!(report.status.success());
    let again: serde_json::Value = serde_json::from_slice(&report.stdout).unwrap();
    assert_eq!(again["cells"], summary["cells"]);
}

#[test]
fn variant_and_l_sweep_select_rows() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("ablation");
    let o = bin(&[
        "sweep", "--colluding", "0.7", "--pc", "0.9", "--variant", "partitioning-only", "--l-sweep", "0.1,0.25,0.7",
        "--reps", "1", "--no-controls", "--set", "sim_end=30", "--set", "collusion_start_window=3,10",
        "--out", out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let mut r = csv::Reader::from_path(out.join("runs.csv")).unwrap();
    let rows: Vec<csv::StringRecord> = r.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 3);
    assert!(rows.iter().all(|row| &row[1] == "serene-prt"));
    let ls: Vec<&str> = rows.iter().map(|row| &row[5]).collect();
    assert_eq!(ls, ["2", "5", "14"]);
}

#[test]
fn undetected_delay_is_an_empty_cell() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("ctrl");
    let o = bin(&[
        "sweep", "--colluding", "0.1", "--pc", "0.1", "--scheme", "sne8", "--reps", "1",
        "--set", "sim_end=10", "--set", "collusion_start_window=3,5", "--out", out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let mut r = csv::Reader::from_path(out.join("runs.csv")).unwrap();
    let headers = r.headers().unwrap().clone();
    let delay = headers.iter().position(|h| h == "detection_delay_s").unwrap();
    let detected = headers.iter().position(|h| h == "detected").unwrap();
    for row in r.records().map(Result::unwrap) {
        if &row[detected] == "false" {
            assert_eq!(&row[delay], "");
        }
    }
}

#[test]
fn exit_codes() {
    assert_eq!(bin(&["simulate", "--bogus"]).status.code(), Some(1));
    assert_eq!(bin(&["simulate", "--pc", "1.5"]).status.code(), Some(1));
    assert_eq!(bin(&["simulate", "--set", "nope=1"]).status.code(), Some(1));
    assert_eq!(bin(&["simulate", "--scheme", "magic"]).status.code(), Some(1));
    assert_eq!(bin(&["report", "/definitely/missing.csv"]).status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    fs::write(&blocker, "x").unwrap();
    let o = bin(&["sweep", "--reps", "1", "--colluding", "0.5", "--pc", "0.5", "--out", blocker.join("sub").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(bin(&["--help"]).status.code(), Some(0));
}

#[test]
fn config_file_is_applied_under_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("scenario.conf");
    fs::write(&cfg, "# short run\nsim_end = 20\ncollusion_start_window = 3, 10\np_collude = 0.9\n").unwrap();
    let o = bin(&["simulate", "--config", cfg.to_str().unwrap(), "--pc", "0.5"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("sim_end = 20"), "{}", text.lines().nth(1).unwrap());
    assert!(text.contains("p_collude = 0.5"));
}
