use std::path::Path;
use std::process::{Command, Output};

fn podsurge(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_podsurge"))
        .args(args)
        .output()
        .unwrap()
}

fn write_config(dir: &Path, json: &str) -> String {
    let path = dir.join("config.json");
    std::fs::write(&path, json).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn plan_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"kind":"fft-mlp"}"#);
    let out = dir.path().join("run");
    let out = out.to_str().unwrap();
    assert!(podsurge(&["plan", "--config", &cfg, "--out", out]).status.success());
    let first = std::fs::read(dir.path().join("run/plan.csv")).unwrap();
    assert!(podsurge(&["plan", "--config", &cfg, "--out", out]).status.success());
    let second = std::fs::read(dir.path().join("run/plan.csv")).unwrap();
    assert_eq!(first, second);
    let text = String::from_utf8(first).unwrap();
    assert!(text.starts_with("Case,H/d,Fr,V"));
    assert_eq!(text.lines().count(), 26);
}

#[test]
fn pod_captures_energy() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"kind":"pod-lstm","cycles":4}"#);
    let out = dir.path().join("run");
    let out = out.to_str().unwrap();
    assert!(podsurge(&["generate", "--config", &cfg, "--out", out]).status.success());
    let res = podsurge(&["pod", "--config", &cfg, "--out", out]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let text = std::fs::read_to_string(dir.path().join("run/pod_basis.json")).unwrap();
    let json: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert!(json["energy_captured"].as_f64().unwrap() >= 0.99);
}

#[test]
fn evaluate_without_model_is_missing_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"kind":"avg-forecast","cycles":4}"#);
    let out = dir.path().join("run");
    let out = out.to_str().unwrap();
    assert!(podsurge(&["generate", "--config", &cfg, "--out", out]).status.success());
    let res = podsurge(&["evaluate", "--config", &cfg, "--out", out]);
    assert!(!res.status.success());
    let stderr = String::from_utf8_lossy(&res.stderr);
    assert!(stderr.contains("missing artifact"), "{stderr}");
}

#[test]
fn bad_config_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"kind":"fft-mlp","unknown":1}"#);
    let res = podsurge(&["plan", "--config", &cfg]);
    assert_eq!(res.status.code(), Some(2));
    let missing = podsurge(&["plan", "--config", dir.path().join("nope.json").to_str().unwrap()]);
    assert!(!missing.status.success());
    assert!(!podsurge(&["frobnicate"]).status.success());
}

#[test]
fn seed_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"kind":"avg-forecast","cycles":4,"lstm":{"hidden_size":4,"training":{"max_epochs":2}},
           "transformer":{"model_dim":8,"heads":2,"layers":1,"ff_dim":8,"training":{"max_epochs":2}}}"#,
    );
    let run = |name: &str, seed: &str| {
        let out = dir.path().join(name);
        let out = out.to_str().unwrap().to_string();
        for stage in ["generate", "train", "evaluate"] {
            let res = podsurge(&[stage, "--config", &cfg, "--out", &out, "--seed", seed]);
            assert!(
                res.status.success(),
                "{stage}: {}",
                String::from_utf8_lossy(&res.stderr)
            );
        }
        std::fs::read_to_string(dir.path().join(name).join("report.json")).unwrap()
    };
    let a = run("a", "5");
    let b = run("b", "5");
    let c = run("c", "6");
    assert_eq!(a, b);
    assert_ne!(a, c);
    assert!(a.contains("\"seed\": 5"));
}
