use std::path::Path;
use std::process::{Command, Output};

fn structid(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_structid")).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn simulate_then_identify() {
    let dir = tempfile::tempdir().unwrap();
    let o = structid(&["simulate", "harmonic", "--out", s(dir.path())]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let grid = dir.path().join("harmonic.grid");
    assert!(grid.exists() && dir.path().join("harmonic.sim.json").exists());

    let model = dir.path().join("model.json");
    let o = structid(&[
        "identify",
        "--data",
        s(&grid),
        "--dictionary",
        "prior",
        "--form",
        "weak",
        "--out",
        s(&model),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&model).unwrap()).unwrap();
    assert_eq!(v["system"], "harmonic");
    assert_eq!(v["dictionary"], "prior");
    let terms = v["terms"].as_array().unwrap();
    assert!(!terms.is_empty());
    assert_eq!(terms.len(), v["support"].as_array().unwrap().len());
}

#[test]
fn benchmark_then_plot() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bench.toml");
    std::fs::write(
        &cfg,
        "system = \"harmonic\"\nconfigs = [\"conf1\", \"conf4\"]\ntrials = 2\n[noise]\nlevels = [0.0, 0.1]\n",
    )
    .unwrap();
    let out = dir.path().join("run");
    let o = structid(&["--seed", "3", "--threads", "2", "benchmark", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(out.join("results.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 2 * 2 * 2);
    assert!(csv.starts_with("system,config,nsr,trial,tpr"));

    let plots = dir.path().join("plots");
    let o = structid(&["plot", "--report", s(&out.join("report.json")), "--out", s(&plots)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(plots.join("tpr_conf1.svg").exists() && plots.join("tpr_conf4.svg").exists());
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&structid(&["--help"])), 0);
    // usage errors
    assert_eq!(code(&structid(&["simulate", "lorenz", "--out", s(dir.path())])), 1);
    assert_eq!(code(&structid(&["identify", "--data", "x.grid"])), 1);
    // invalid configuration
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "system = \"burgers\"\ntrials = 0\n").unwrap();
    assert_eq!(code(&structid(&["benchmark", "--config", s(&bad), "--out", s(dir.path())])), 1);
    assert_eq!(code(&structid(&["benchmark", "--config", s(&dir.path().join("missing.toml"))])), 1);
    // runtime failure: the data file is unreadable
    let junk = dir.path().join("junk.grid");
    std::fs::write(&junk, b"not a grid").unwrap();
    let o = structid(&[
        "identify",
        "--data",
        s(&junk),
        "--dictionary",
        "baseline",
        "--form",
        "strong",
        "--system",
        "burgers",
        "--out",
        s(&dir.path().join("m.json")),
    ]);
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn shipped_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        structid::harness::ExperimentConfig::from_file(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
        n += 1;
    }
    assert!(n >= 3);
}
