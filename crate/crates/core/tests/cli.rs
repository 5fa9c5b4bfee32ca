use std::fs;
use std::path::Path;
use std::process::Command;

const CONFIG: &str = r#"{
    "task": {"kind": "quadratic", "users": 4, "dim": 8, "heterogeneity": 0.4, "num_layers": 4},
    "clients": {"kind": "generated", "compute_rate": [5, 40], "comm_time": [0.1, 0.8]},
    "rounds": 6, "t_max": 30,
    "lr": {"kind": "inverse_decay", "eta0": 0.2},
    "m_ref": 2.0,
    "methods": ["adel", "drop"],
    "seeds": [1, 2, 3, 4, 5],
    "scheduler": {"multistart_count": 2},
    "verify": {
        "gamma_shapes": 8,
        "lemma1_layers": [2], "lemma1_users": [3], "lemma1_ratios": [2.0],
        "lemma2_settings": [], "lemma3_settings": []
    }
}"#;

fn adelfl(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_adelfl")).args(args).output().unwrap()
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("config.json");
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn subcommands_write_their_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), CONFIG);
    let out = dir.path().join("out");
    let out = out.to_str().unwrap();
    for (args, file) in [
        (vec!["optimize-schedule", &config, "--out", out], "schedule.json"),
        (vec!["simulate", &config, "--out", out, "--seed", "3"], "rounds.csv"),
        (vec!["compare", &config, "--out", out, "--format", "json"], "compare.json"),
        (vec!["verify-lemmas", &config, "--out", out, "--trials", "10000"], "verify.json"),
    ] {
        let result = adelfl(&args);
        assert!(result.status.success(), "{args:?}: {}", String::from_utf8_lossy(&result.stderr));
        assert!(Path::new(out).join(file).exists(), "{file}");
    }
    let schedule: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(Path::new(out).join("schedule.json")).unwrap()).unwrap();
    for key in ["deadlines", "m", "cost", "baseline_cost", "iterations", "restarts"] {
        assert!(schedule.get(key).is_some(), "{key}");
    }
    assert!(Path::new(out).join("model.json").exists());
}

#[test]
fn configuration_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "{\"rounds\": 3}");
    let out = dir.path().to_str().unwrap();
    assert_eq!(adelfl(&["simulate", &config, "--out", out]).status.code(), Some(2));
    let missing = dir.path().join("missing.json");
    assert_eq!(
        adelfl(&["optimize-schedule", missing.to_str().unwrap(), "--out", out]).status.code(),
        Some(2)
    );
    let config = write_config(dir.path(), CONFIG);
    assert_eq!(
        adelfl(&["compare", &config, "--out", out, "--seeds", "1,2"]).status.code(),
        Some(2)
    );
}

#[test]
fn infeasible_budget_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), &CONFIG.replace("\"t_max\": 30", "\"t_max\": 1"));
    let out = dir.path().to_str().unwrap();
    assert_eq!(adelfl(&["optimize-schedule", &config, "--out", out]).status.code(), Some(3));
}

#[test]
fn failed_verification_exits_with_four() {
    let dir = tempfile::tempdir().unwrap();
    let strict = r#"{"gamma_shapes": 64, "gamma_tolerance": -1.0,
        "lemma1_layers": [], "lemma2_settings": [], "lemma3_settings": []}"#;
    let config = write_config(dir.path(), strict);
    let out = dir.path().to_str().unwrap();
    let result = adelfl(&["verify-lemmas", &config, "--out", out, "--trials", "10000"]);
    assert_eq!(result.status.code(), Some(4));
    assert!(dir.path().join("verify.json").exists());
}
