use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ocbf-merge")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn rows(o: &Output) -> Vec<Vec<String>> {
    stdout(o)
        .lines()
        .skip(1)
        .map(|l| l.split('\t').map(str::to_string).collect())
        .collect()
}

#[test]
fn case_count_prints_the_count() {
    for (n, want) in [("5", "56"), ("1", "2"), ("3", "9")] {
        let o = bin(&["case-count", n]);
        assert!(o.status.success());
        assert_eq!(stdout(&o).trim(), want);
    }
}

#[test]
fn run_writes_one_directory_per_cell() {
    let out = tempfile::tempdir().unwrap();
    let o = bin(&[
        "run", "--alpha", "0.01", "--mode", "ocbf", "--no-noise", "--horizon", "60", "--out",
        out.path().to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r = rows(&o);
    assert_eq!(r.len(), 1);
    assert_eq!((r[0][0].as_str(), r[0][1].as_str(), r[0][4].as_str()), ("OCBF", "0.01", "off"));
    let dir = out.path().join("00_ocbf_a0.01_s0");
    for f in ["config.toml", "vehicles.tsv", "series.tsv", "violations.tsv"] {
        assert!(dir.join(f).is_file(), "{f}");
    }
    assert!(!dir.join("tables.txt").exists());
    // The summary row is recomputable from the per-vehicle file.
    let (n, t, e, _) =
        ocbf_merge::report::summarize_vehicles_tsv(&fs::read_to_string(dir.join("vehicles.tsv")).unwrap()).unwrap();
    assert_eq!(r[0][5], n.to_string());
    assert_eq!(r[0][6], format!("{t:.4}"));
    assert_eq!(r[0][7], format!("{e:.4}"));
}

#[test]
fn repeated_seed_gives_identical_outputs() {
    let out = tempfile::tempdir().unwrap();
    let o = bin(&["run", "--seed", "7", "--seed", "7", "--horizon", "60", "--out", out.path().to_str().unwrap()]);
    assert!(o.status.success());
    let r = rows(&o);
    assert_eq!(r.len(), 2);
    assert_eq!(r[0], r[1]);
    let read = |d: &str| fs::read(out.path().join(d).join("vehicles.tsv")).unwrap();
    assert_eq!(read("00_ocbf_b1_s7"), read("01_ocbf_b1_s7"));
}

#[test]
fn saved_config_reloads() {
    let out = tempfile::tempdir().unwrap();
    let p = out.path().to_str().unwrap();
    assert!(bin(&["run", "--alpha", "0.25", "--mode", "cbf", "--horizon", "30", "--out", p]).status.success());
    let cfg = out.path().join("00_cbf_a0.25_s0").join("config.toml");
    let again = out.path().join("again");
    let o = bin(&["run", "--config", cfg.to_str().unwrap(), "--out", again.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r = rows(&o);
    assert_eq!((r[0][0].as_str(), r[0][1].as_str()), ("CBF", "0.25"));
    let first = fs::read(out.path().join("00_cbf_a0.25_s0/vehicles.tsv")).unwrap();
    let second = fs::read(again.join("00_cbf_a0.25_s0/vehicles.tsv")).unwrap();
    assert_eq!(first, second);
}

fn recorded_run(out: &Path) -> std::path::PathBuf {
    let o = bin(&["run", "--horizon", "40", "--tables", "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    out.join("00_ocbf_b1_s0")
}

#[test]
fn dump_tables_picks_the_nearest_sample() {
    let out = tempfile::tempdir().unwrap();
    let dir = recorded_run(out.path());
    let o = bin(&["dump-tables", "--run", dir.to_str().unwrap(), "--time", "0"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.starts_with("# t = 0\n"));
    // Nothing has arrived at t = 0: both tables are empty.
    let body: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(body.iter().filter(|l| l.starts_with("S1") || l.starts_with("S2")).count(), 2);
    assert!(body.iter().all(|l| !l.starts_with("n") && !l.starts_with(char::is_numeric)));

    let o = bin(&["dump-tables", "--run", dir.to_str().unwrap(), "--time", "20.4"]);
    assert!(o.status.success());
    assert!(stdout(&o).starts_with("# t = 20\n"));
}

#[test]
fn errors_map_to_exit_codes() {
    let out = tempfile::tempdir().unwrap();
    let p = out.path().to_str().unwrap();
    assert_eq!(bin(&["run", "--alpha", "1.5", "--out", p]).status.code(), Some(1));
    assert_eq!(bin(&["run", "--horizon", "-3", "--out", p]).status.code(), Some(1));
    assert_eq!(bin(&["run", "--config", "/nonexistent.toml", "--out", p]).status.code(), Some(1));
    let bad = out.path().join("bad.toml");
    fs::write(&bad, "[scenario]\nphi = -1.0\n").unwrap();
    assert_eq!(bin(&["run", "--config", bad.to_str().unwrap(), "--out", p]).status.code(), Some(1));
    assert_eq!(bin(&["no-such-command"]).status.code(), Some(1));

    let dir = recorded_run(out.path());
    assert_eq!(bin(&["dump-tables", "--run", dir.to_str().unwrap(), "--time", "500"]).status.code(), Some(1));

    // An output path that cannot be created is a run failure.
    let file = out.path().join("plain-file");
    fs::write(&file, "").unwrap();
    assert_eq!(bin(&["run", "--horizon", "5", "--out", file.to_str().unwrap()]).status.code(), Some(2));
}
