use std::path::Path;
use std::process::{Command, Output};

fn lab(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dsf-lab"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn read(dir: &Path, name: &str) -> Vec<u8> {
    std::fs::read(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

#[test]
fn coalesce_reruns_are_byte_identical() {
    let args = ["coalesce", "--d", "2", "--p", "2", "--sep", "5", "--reps", "10", "--seed", "42"];
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert!(lab(a.path(), &args).status.success());
    assert!(lab(b.path(), &args).status.success());
    for f in ["records.jsonl", "summary.json", "times.csv", "manifest.json"] {
        assert_eq!(read(a.path(), f), read(b.path(), f), "{f}");
    }
    let lines = String::from_utf8(read(a.path(), "records.jsonl")).unwrap();
    assert_eq!(lines.lines().count(), 10);
}

#[test]
fn unknown_flag_exits_two_with_usage() {
    let d = tempfile::tempdir().unwrap();
    let o = lab(d.path(), &["coalesce", "--bogus", "1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));
    let o = lab(d.path(), &["coalesce", "--p", "0.5"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn runtime_failure_exits_one() {
    let d = tempfile::tempdir().unwrap();
    let o = lab(d.path(), &["coalesce", "--d", "0", "--reps", "1"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn counterexample_prints_fractions_and_pass() {
    let d = tempfile::tempdir().unwrap();
    let o = lab(d.path(), &["dominate", "counterexample"]);
    assert!(o.status.success());
    let s = String::from_utf8(o.stdout).unwrap();
    assert!(s.contains("11527/216") && s.contains("3473/64"), "{s}");
    assert_eq!(s.trim_end().lines().last(), Some("PASS"));
    assert!(d.path().join("manifest.json").exists());
}

#[test]
fn config_file_supplies_defaults_and_flags_override() {
    let d = tempfile::tempdir().unwrap();
    let cfg = d.path().join("run.cfg");
    std::fs::write(&cfg, "# campaign\nreps = 3\nsep = 2\nhorizon = 50\n").unwrap();
    let out = d.path().join("a");
    let o = lab(&out, &["--config", cfg.to_str().unwrap(), "coalesce"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(String::from_utf8(read(&out, "records.jsonl")).unwrap().lines().count(), 3);
    let manifest: serde_json::Value = serde_json::from_slice(&read(&out, "manifest.json")).unwrap();
    assert_eq!(manifest["config"]["sep"], 2.0);

    let out = d.path().join("b");
    let o = lab(&out, &["coalesce", "--config", cfg.to_str().unwrap(), "--reps", "2"]);
    assert!(o.status.success());
    assert_eq!(String::from_utf8(read(&out, "records.jsonl")).unwrap().lines().count(), 2);

    std::fs::write(&cfg, "reps 3\n").unwrap();
    assert_eq!(lab(&out, &["--config", cfg.to_str().unwrap(), "coalesce"]).status.code(), Some(2));
}

#[test]
fn every_subcommand_writes_a_manifest() {
    let runs: [&[&str]; 7] = [
        &["forest", "--width", "5", "--height", "5"],
        &["explore", "--steps", "200", "--check"],
        &["dominate", "alpha", "--n", "500", "--histories", "2"],
        &["partition", "--k", "3", "--configs", "2", "--n-mc", "64"],
        &["escape", "--reps", "2", "--horizon", "200"],
        &["scale", "--trajectories", "20", "--height", "10", "--paths", "3"],
        &["audit", "--zero-control", "--renewals", "50", "--reps", "2"],
    ];
    for args in runs {
        let d = tempfile::tempdir().unwrap();
        let o = lab(d.path(), args);
        assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
        let m: serde_json::Value = serde_json::from_slice(&read(d.path(), "manifest.json")).unwrap();
        assert_eq!(m["command"], args[0]);
        assert!(d.path().join("summary.json").exists(), "{args:?}");
    }
}
