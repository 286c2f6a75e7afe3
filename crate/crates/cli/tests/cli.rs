use std::path::PathBuf;
use std::process::{Command, Output};

fn config(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn levystop(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_levystop"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn run_with(cmd: &str, cfg: &str, extra: &[&str]) -> Output {
    let path = config(cfg);
    let mut args = vec![cmd, "--config", path.to_str().unwrap()];
    args.extend_from_slice(extra);
    levystop(&args)
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn solve_brownian_desk() {
    let out = run_with("solve", "brownian.toml", &[]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let text = stdout(&out);
    let b: f64 = text
        .lines()
        .find_map(|l| l.strip_prefix("B_c = "))
        .unwrap()
        .parse()
        .unwrap();
    assert!((b - 0.5132).abs() < 1e-4, "{text}");
    assert!(text.contains("method = SmoothPastingLimit"));
    assert!(text.contains("seed = 20240601"));
    assert!(text.contains("config_hash = "));
}

#[test]
fn solve_json_is_one_object() {
    let out = run_with("solve", "compound_poisson.toml", &["--json"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let doc: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(doc["solution"]["method"], "ContinuousPasting");
    let b = doc["B_c"].as_f64().unwrap();
    assert!((b - 0.3148).abs() < 3e-3, "{b}");
    assert_eq!(doc["seed"], 20240601);
}

#[test]
fn check_names_failing_assumption() {
    let out = run_with("check", "explosive.toml", &[]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains("Assumption 3"), "{}", stderr(&out));
    assert!(stdout(&out).contains("Assumption 3 : FAIL"));
    // compute commands refuse the same way
    let out = run_with("solve", "explosive.toml", &[]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn check_passes_desk_models() {
    for cfg in ["brownian.toml", "brownian_growing.toml", "compound_poisson.toml", "kou.toml"] {
        let out = run_with("check", cfg, &[]);
        assert_eq!(out.status.code(), Some(0), "{cfg}");
    }
    let out = run_with("check", "compound_poisson.toml", &[]);
    assert!(stdout(&out).contains("Assumption 4 : remark-mode"));
}

#[test]
fn parse_errors_exit_2_with_location() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "family = \"brownian\"\nsigma = 0.3\nr = 0.05\nc = 1.0\nsigmaa = 2\n").unwrap();
    let out = levystop(&["solve", "--config", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("line 5"), "{}", stderr(&out));

    std::fs::write(&bad, "family = \"brownian\"\nsigma = \"x\"\n").unwrap();
    let out = levystop(&["solve", "--config", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("line 2"), "{}", stderr(&out));

    let out = levystop(&["solve", "--config", "/nonexistent/model.toml"]);
    assert_eq!(out.status.code(), Some(2));
    let out = levystop(&["solve"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn value_csv_has_header_and_rows() {
    let out = run_with("value", "brownian.toml", &["--seed", "9"]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    let mut lines = text.lines();
    let first = lines.next().unwrap();
    assert!(first.starts_with("# config_hash=") && first.ends_with(" seed=9"), "{first}");
    assert_eq!(lines.next(), Some("v,value,se,branch"));
    assert_eq!(lines.clone().count(), 64);
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows[0][3], "stop");
    assert_eq!(rows[63][3], "continue");
}

#[test]
fn csv_outputs_are_reproducible_across_workers() {
    let dir = tempfile::tempdir().unwrap();
    let mut files = Vec::new();
    for (k, workers) in ["1", "4", "1"].iter().enumerate() {
        let out_dir = dir.path().join(format!("run{k}"));
        let o = out_dir.to_str().unwrap();
        for cmd in ["value", "sweep", "simulate"] {
            let out = run_with(cmd, "compound_poisson.toml", &["--paths", "5000", "--workers", workers, "--out", o]);
            assert_eq!(out.status.code(), Some(0), "{cmd}: {}", stderr(&out));
        }
        files.push(out_dir);
    }
    for name in ["value.csv", "sweep.csv", "simulate.csv"] {
        let a = std::fs::read(files[0].join(name)).unwrap();
        assert!(a.starts_with(b"# config_hash="));
        for other in &files[1..] {
            assert_eq!(a, std::fs::read(other.join(name)).unwrap(), "{name}");
        }
    }
    let sweep = std::fs::read_to_string(files[0].join("sweep.csv")).unwrap();
    assert_eq!(sweep.lines().nth(1), Some("b,value,se"));
    let sim = std::fs::read_to_string(files[0].join("simulate.csv")).unwrap();
    assert_eq!(sim.lines().nth(1), Some("path,stopped,tau,v_tau,payoff"));
    assert_eq!(sim.lines().count(), 5002);
}

#[test]
fn config_hash_tracks_settings() {
    let a = stdout(&run_with("solve", "brownian.toml", &[]));
    let b = stdout(&run_with("solve", "brownian.toml", &["--paths", "77"]));
    let c = stdout(&run_with("solve", "brownian.toml", &["--seed", "1"]));
    let hash = |s: &str| s.lines().find(|l| l.starts_with("config_hash")).unwrap().to_string();
    assert_ne!(hash(&a), hash(&b));
    assert_eq!(hash(&a), hash(&c));
}

#[test]
fn verify_shipped_desk_configs() {
    for cfg in ["brownian.toml", "brownian_growing.toml", "compound_poisson.toml", "kou.toml"] {
        let dir = tempfile::tempdir().unwrap();
        let out = run_with("verify", cfg, &["--out", dir.path().to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(0), "{cfg}: {}\n{}", stdout(&out), stderr(&out));
        assert!(!stdout(&out).contains("FAIL"));
        let checks = std::fs::read_to_string(dir.path().join("checks.csv")).unwrap();
        assert!(checks.starts_with("# config_hash="));
        for name in ["value.csv", "supermartingale.csv", "realization.csv", "sweep_v1c.csv"] {
            assert!(dir.path().join(name).exists(), "{cfg}: missing {name}");
        }
    }
}

#[test]
fn verify_reports_failed_invariant() {
    // ten paths per sweep point cannot locate the threshold
    let out = run_with("verify", "compound_poisson.toml", &["--paths", "10"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stdout(&out).contains("FAIL sweep_argmax"));
    assert!(stderr(&out).contains("verification failed: sweep_argmax"), "{}", stderr(&out));
}
