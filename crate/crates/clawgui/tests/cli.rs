use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use clawgui::config::{load_config, Mode, RunConfig};
use clawgui::evalpipe::GroundingMock;
use serde_json::json;

fn clawctl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_clawctl")).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn write(path: &Path, v: serde_json::Value) -> String {
    fs::write(path, v.to_string()).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn help_and_usage_errors() {
    assert_eq!(code(&clawctl(&["--help"])), 0);
    assert_eq!(code(&clawctl(&["eval", "--help"])), 0);
    assert_eq!(code(&clawctl(&[])), 1);
    assert_eq!(code(&clawctl(&["frobnicate"])), 1);
    let o = clawctl(&["train", "--config", "/nonexistent/run.json"]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("cannot read config"));
}

#[test]
fn empty_config_takes_the_documented_defaults() {
    let cfg = RunConfig::from_json("{}").unwrap();
    assert_eq!(cfg.mode, Mode::Train);
    assert_eq!(cfg.train.group_size, 8);
    assert_eq!(cfg.train.temperature, 0.7);
    assert_eq!(cfg.train.max_steps, 50);
    assert_eq!(cfg.train.reward.lambda_step, 0.01);
    assert_eq!(cfg.pool.pool_size, 64);
    assert_eq!(cfg.endpoint.retries, 2);
}

#[test]
fn every_config_problem_is_reported_at_once() {
    let errs = RunConfig::from_json(
        r#"{"train": {"temperature": -1, "group_size": 1}, "pool": {"pool_size": 0}, "bogus": 3}"#,
    )
    .unwrap_err();
    let all = errs.join("\n");
    for needle in ["temperature", "group_size", "pool_size", "bogus"] {
        assert!(all.contains(needle), "{needle} missing from {all}");
    }
    let errs = RunConfig::from_json(r#"{"seed": 1, "train": {"seed": 2}}"#).unwrap_err();
    assert!(errs[0].contains("train.seed"));
    assert!(RunConfig::from_json("[]").is_err());
    assert!(RunConfig::from_json(r#"{"mode": "eval"}"#).unwrap_err().join(" ").contains("eval.dataset"));
}

#[test]
fn frozen_config_reloads_identically() {
    let tmp = tempfile::tempdir().unwrap();
    let run = tmp.path().join("run");
    let cfg = RunConfig::from_json(&json!({"seed": 5, "run_dir": run, "train": {"epochs": 2}}).to_string()).unwrap();
    assert_eq!(cfg.train.seed, 5);
    let path = cfg.freeze().unwrap();
    let again = load_config(&path).unwrap();
    assert_eq!(again, cfg);
    assert_eq!(again.to_json(), fs::read_to_string(&path).unwrap());
}

#[test]
fn invalid_config_file_exits_one() {
    let tmp = tempfile::tempdir().unwrap();
    let p = write(&tmp.path().join("c.json"), json!({"train": {"temperature": -1}}));
    let o = clawctl(&["train", "--config", &p]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("temperature"));
    // A config written for another mode is refused.
    let p = write(&tmp.path().join("d.json"), json!({"mode": "doctor"}));
    assert_eq!(code(&clawctl(&["train", "--config", &p])), 1);
}

#[test]
fn short_training_run_writes_its_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let run = tmp.path().join("run");
    let p = write(
        &tmp.path().join("c.json"),
        json!({
            "run_dir": run,
            "train": {"max_updates": 2, "max_steps": 8, "group_size": 4, "batch_tasks": 1},
            "pool": {"pool_size": 4, "spare_count": 1}
        }),
    );
    let o = clawctl(&["train", "--config", &p]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("trained 2 updates"));
    for f in ["run.json", "report.json", "params.json", "trajectories.jsonl", "advantages.jsonl"] {
        assert!(run.join(f).is_file(), "{f}");
    }
}

#[test]
fn doctor_reports_pool_status() {
    let tmp = tempfile::tempdir().unwrap();
    let p = write(
        &tmp.path().join("c.json"),
        json!({"mode": "doctor", "pool": {"pool_size": 4, "spare_count": 2, "fault_plan": {"crash_prob": 0.05, "stall_prob": 0.0, "rng_seed": 1}}}),
    );
    let o = clawctl(&["env", "doctor", "--config", &p, "--episodes", "12"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let out = String::from_utf8_lossy(&o.stdout);
    assert!(out.contains("faults injected"), "{out}");
}

#[test]
fn evaluation_pipeline_end_to_end() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("bench");
    let d = data.to_str().unwrap();
    let o = clawctl(&["bench", "gen", "--out", d, "--samples", "24", "--seed", "3"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(data.join("dataset.jsonl").is_file());

    let server = GroundingMock::default().serve().unwrap();
    let run = tmp.path().join("eval");
    let p = write(
        &tmp.path().join("e.json"),
        json!({
            "mode": "eval",
            "run_dir": run,
            "endpoint": {"base_url": format!("{}/v1", server.url()), "backoff_ms": 1},
            "eval": {
                "dataset": data.join("dataset.jsonl"),
                "benchmark": "synthetic",
                "profile": {
                    "model_id": "mock",
                    "prompt_template_id": "grounding_v1",
                    "coordinate_convention": "absolute_pixels",
                    "max_pixels": 4000000,
                    "temperature": 0.0,
                    "parser_id": "point"
                },
                "infer": {"shard_count": 3, "worker_count": 2}
            }
        }),
    );
    for stage in ["infer", "judge", "metric", "report"] {
        let o = clawctl(&["eval", stage, "--config", &p]);
        assert_eq!(code(&o), 0, "{stage}: {}", String::from_utf8_lossy(&o.stderr));
    }
    let m: serde_json::Value = serde_json::from_str(&fs::read_to_string(run.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(m["overall"]["total"], 24);
    assert_eq!(m["overall"]["accuracy"], "100.00");
    let rep: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(run.join("reproduction.json")).unwrap()).unwrap();
    assert!(rep["rows"].as_array().unwrap().iter().any(|r| r["model"] == "mock"));

    // Stand-alone judge and metric with explicit paths.
    let alt = tmp.path().join("alt");
    let o = clawctl(&[
        "eval", "judge", "--dataset", data.join("dataset.jsonl").to_str().unwrap(),
        "--predictions", run.join("predictions").to_str().unwrap(), "--out", alt.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(fs::read(alt.join("judgments.jsonl")).unwrap(), fs::read(run.join("judgments.jsonl")).unwrap());
    let o = clawctl(&["eval", "judge", "--dataset", data.join("dataset.jsonl").to_str().unwrap()]);
    assert_eq!(code(&o), 1);
}

#[test]
fn bundled_table_report() {
    let tmp = tempfile::tempdir().unwrap();
    let o = clawctl(&["eval", "report", "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("pass 46 fail 2"));
    assert!(tmp.path().join("reproduction.json").is_file());
}
