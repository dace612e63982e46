use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fcvi(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fcvi"))
        .args(args)
        .env_remove("FCVI_WORKERS")
        .output()
        .unwrap()
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/configs")
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("config.json");
    fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

const SMALL: &str = r#"{
  "name": "small",
  "instance": {"builtin": "QC1"},
  "method": "stopconex",
  "policy": {"name": "stoch_B", "b": 2.0},
  "noise": {"sigma_f": 0.2},
  "horizons": [50, 100, 200],
  "seeds": [3, 4],
  "x0": [1.0, 1.0],
  "plot_data": true
}"#;

#[test]
fn solve_writes_one_trace_per_cell() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("qc1_opconex.json");
    let out = dir.path().join("out");
    let o = fcvi(&[
        "solve",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for t in [100, 1000, 10000] {
        assert!(out.join(format!("trace_T{t}_seed0.csv")).exists());
    }
    let summary: serde_like::Summary = serde_like::load(&out.join("summary.json"));
    assert!(
        (-1.1..=-0.9).contains(&summary.infeasibility_slope),
        "slope {}",
        summary.infeasibility_slope
    );
}

#[test]
fn identical_runs_give_identical_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(fcvi(&["solve", "--config", &cfg, "--out", a.to_str().unwrap()])
        .status
        .success());
    assert!(fcvi(&[
        "sweep",
        "--config",
        &cfg,
        "--out",
        b.to_str().unwrap(),
        "--workers",
        "4"
    ])
    .status
    .success());
    let mut names: Vec<_> = fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert_eq!(names.len(), 6 + 2);
    for name in names {
        assert_eq!(
            fs::read(a.join(&name)).unwrap(),
            fs::read(b.join(&name)).unwrap(),
            "{name:?}"
        );
    }
}

#[test]
fn workers_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("o");
    let bad = Command::new(env!("CARGO_BIN_EXE_fcvi"))
        .args(["sweep", "--config", &cfg, "--out", out.to_str().unwrap()])
        .env("FCVI_WORKERS", "0")
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(2));
    let good = Command::new(env!("CARGO_BIN_EXE_fcvi"))
        .args(["sweep", "--config", &cfg, "--out", out.to_str().unwrap()])
        .env("FCVI_WORKERS", "2")
        .output()
        .unwrap();
    assert!(good.status.success());
}

#[test]
fn malformed_json_exits_2_with_location() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "{\n  \"method\": \"opconex\",\n  \"horizons\": [10,\n}\n");
    for cmd in ["validate", "solve"] {
        let o = fcvi(
            &[cmd, "--config", &cfg, "--out", dir.path().to_str().unwrap()][..if cmd == "validate" { 3 } else { 5 }],
        );
        assert_eq!(o.status.code(), Some(2));
        let err = String::from_utf8_lossy(&o.stderr);
        assert!(err.contains("line 4"), "{err}");
    }
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    for body in [
        SMALL.replace("[50, 100, 200]", "[100, 50]"),
        SMALL.replace("\"seeds\": [3, 4]", "\"seeds\": []"),
        SMALL.replace("{\"builtin\": \"QC1\"}", "{\"file\": \"missing.json\"}"),
        SMALL.replace("\"stopconex\"", "\"opconex\""),
        SMALL.replace("\"name\": \"small\"", "\"nmae\": \"small\""),
    ] {
        let cfg = write_config(dir.path(), &body);
        let o = fcvi(&["validate", "--config", &cfg]);
        assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let missing = dir.path().join("nope.json");
    assert_eq!(
        fcvi(&["validate", "--config", missing.to_str().unwrap()]).status.code(),
        Some(2)
    );
    assert_eq!(fcvi(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn validate_accepts_shipped_configs() {
    for entry in fs::read_dir(configs()).unwrap() {
        let path = entry.unwrap().path();
        let o = fcvi(&["validate", "--config", path.to_str().unwrap()]);
        assert!(
            o.status.success(),
            "{}: {}",
            path.display(),
            String::from_utf8_lossy(&o.stderr)
        );
        assert!(String::from_utf8_lossy(&o.stdout).starts_with("ok"));
    }
}

#[test]
fn report_tables_and_refusals() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("s");
    assert!(fcvi(&["solve", "--config", &cfg, "--out", out.to_str().unwrap()])
        .status
        .success());
    let summary = out.join("summary.json");
    let csv = dir.path().join("table.csv");
    let o = fcvi(&["report", summary.to_str().unwrap(), "--csv", csv.to_str().unwrap()]);
    assert!(o.status.success());
    let text = String::from_utf8_lossy(&o.stdout);
    assert_eq!(text.lines().count(), 3, "{text}");
    assert_eq!(fs::read_to_string(&csv).unwrap().lines().count(), 2);

    let det = dir.path().join("d");
    let qc1 = configs().join("qc1_opconex.json");
    assert!(fcvi(&[
        "solve",
        "--config",
        qc1.to_str().unwrap(),
        "--out",
        det.to_str().unwrap()
    ])
    .status
    .success());
    let mixed = fcvi(&[
        "report",
        summary.to_str().unwrap(),
        det.join("summary.json").to_str().unwrap(),
    ]);
    assert_eq!(mixed.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&mixed.stderr).contains("mix"));
}

/// Minimal reader for the fields these tests check, so the CLI tests do not
/// depend on the library's types.
mod serde_like {
    use std::path::Path;

    pub struct Summary {
        pub infeasibility_slope: f64,
    }

    pub fn load(path: &Path) -> Summary {
        let text = std::fs::read_to_string(path).unwrap();
        let at = text.find("\"channel\": \"infeasibility\"").expect("infeasibility fit");
        let rest = &text[at..];
        let s = rest.find("\"slope\":").unwrap() + "\"slope\":".len();
        let end = rest[s..].find(',').unwrap();
        Summary {
            infeasibility_slope: rest[s..s + end].trim().parse().unwrap(),
        }
    }
}
