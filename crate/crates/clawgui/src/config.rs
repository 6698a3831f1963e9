//! Run configuration: one JSON file, defaults filled in, validated in full
//! before any work starts, and frozen into `run_dir/run.json`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use clawgui_core::eval::ModelProfile;

use crate::envpool::PoolConfig;
use crate::evalpipe::infer::PROMPT_TEMPLATES;
use crate::evalpipe::{BenchGenConfig, InferConfig};
use crate::trainer::{OutcomeKind, PrmKind, TrainConfig};
use crate::wire::EndpointSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Train,
    Eval,
    Doctor,
    Benchgen,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Train => "train",
            Mode::Eval => "eval",
            Mode::Doctor => "doctor",
            Mode::Benchgen => "benchgen",
        }
    }
}

/// Where pool environments come from.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EnvBackendConfig {
    #[default]
    Simulated,
    /// Device servers, one URL per environment slot (reused round-robin).
    Remote { urls: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSettings {
    /// Line-delimited dataset; image paths resolve against its directory.
    pub dataset: Option<PathBuf>,
    /// Benchmark name used in reports.
    pub benchmark: String,
    pub profile: Option<ModelProfile>,
    pub infer: InferConfig,
    /// Official score table; the bundled one when absent.
    pub official_table: Option<PathBuf>,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self {
            dataset: None,
            benchmark: "synthetic".into(),
            profile: None,
            infer: InferConfig::default(),
            official_table: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub mode: Mode,
    pub run_dir: PathBuf,
    /// Master seed. It is copied into `train.seed` and `bench.seed`.
    pub seed: u64,
    pub train: TrainConfig,
    pub pool: PoolConfig,
    pub env_backend: EnvBackendConfig,
    /// Endpoint for the remote step judge and the outcome judge.
    pub judge_endpoint: Option<EndpointSpec>,
    pub eval: EvalSettings,
    /// Model endpoint for `eval infer`.
    pub endpoint: EndpointSpec,
    pub bench: BenchGenConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Train,
            run_dir: PathBuf::from("runs/latest"),
            seed: 0,
            train: TrainConfig::default(),
            pool: PoolConfig::default(),
            env_backend: EnvBackendConfig::Simulated,
            judge_endpoint: None,
            eval: EvalSettings::default(),
            endpoint: EndpointSpec::default(),
            bench: BenchGenConfig::default(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read { path: String, source: std::io::Error },
    #[error("invalid config {path}:\n  {}", errors.join("\n  "))]
    Invalid { path: String, errors: Vec<String> },
    #[error("cannot write {path}: {source}")]
    Write { path: String, source: std::io::Error },
}

/// Report and remove keys in `user` that the default tree does not have.
/// Tagged enums (objects with a `kind` key) and optional sections are left
/// to the typed pass.
fn strip_unknown_keys(user: &mut Value, default: &Value, path: &str, errors: &mut Vec<String>) {
    let (Value::Object(u), Value::Object(d)) = (user, default) else { return };
    if d.contains_key("kind") {
        return;
    }
    u.retain(|k, v| {
        let p = if path.is_empty() { k.clone() } else { format!("{path}.{k}") };
        match d.get(k) {
            None => {
                errors.push(format!("{p}: unknown key"));
                false
            }
            Some(dv) => {
                strip_unknown_keys(v, dv, &p, errors);
                true
            }
        }
    });
}

impl RunConfig {
    /// Parse and validate config text. Every problem found is reported.
    pub fn from_json(text: &str) -> Result<Self, Vec<String>> {
        let mut value: Value = serde_json::from_str(text).map_err(|e| vec![format!("not valid JSON: {e}")])?;
        if !value.is_object() {
            return Err(vec!["top level must be a JSON object".into()]);
        }
        let defaults = serde_json::to_value(RunConfig::default()).expect("defaults serialize");
        let mut errors = Vec::new();
        strip_unknown_keys(&mut value, &defaults, "", &mut errors);
        let top = value.as_object().expect("checked above").clone();
        // Type-check each section on its own so one bad section does not hide
        // the others.
        let mut typed = true;
        for (k, v) in &top {
            let one = Value::Object([(k.clone(), v.clone())].into_iter().collect());
            if let Err(e) = serde_json::from_value::<RunConfig>(one) {
                errors.push(format!("{k}: {e}"));
                typed = false;
            }
        }
        for section in ["train", "bench"] {
            let inner = top.get(section).and_then(|s| s.get("seed")).and_then(Value::as_u64);
            let outer = top.get("seed").and_then(Value::as_u64).unwrap_or(0);
            if inner.is_some_and(|s| s != outer) {
                errors.push(format!("{section}.seed: conflicts with the top-level seed {outer}; set `seed` instead"));
            }
        }
        if !typed {
            return Err(errors);
        }
        let mut cfg: RunConfig = serde_json::from_value(value).map_err(|e| vec![e.to_string()])?;
        cfg.train.seed = cfg.seed;
        cfg.bench.seed = cfg.seed;
        if let Err(more) = cfg.validate() {
            errors.extend(more);
        }
        if errors.is_empty() {
            Ok(cfg)
        } else {
            Err(errors)
        }
    }

    pub fn validate(&self) -> Result<(), Vec<String>> {
        let mut errors = Vec::new();
        self.train.validate("train", &mut errors);
        self.pool.validate("pool", &mut errors);
        self.endpoint.validate("endpoint", &mut errors);
        self.bench.validate("bench", &mut errors);
        self.eval.infer.validate("eval.infer", &mut errors);
        if let Some(j) = &self.judge_endpoint {
            j.validate("judge_endpoint", &mut errors);
        }
        if self.run_dir.as_os_str().is_empty() {
            errors.push("run_dir must not be empty".into());
        }
        let needs_judge = self.train.reward.prm == PrmKind::Remote || self.train.reward.outcome == OutcomeKind::Judge;
        if needs_judge && self.judge_endpoint.is_none() {
            errors.push("judge_endpoint is required when train.reward uses a remote judge".into());
        }
        if let EnvBackendConfig::Remote { urls } = &self.env_backend {
            if urls.is_empty() {
                errors.push("env_backend.urls must list at least one device server".into());
            }
        }
        if let Some(p) = &self.eval.profile {
            if !PROMPT_TEMPLATES.contains(&p.prompt_template_id.as_str()) {
                errors.push(format!(
                    "eval.profile.prompt_template_id: unknown template {:?} (known: {})",
                    p.prompt_template_id,
                    PROMPT_TEMPLATES.join(", ")
                ));
            }
            if !(p.temperature.is_finite() && p.temperature >= 0.0) {
                errors.push("eval.profile.temperature must be finite and non-negative".into());
            }
            if p.max_pixels == 0 {
                errors.push("eval.profile.max_pixels must be positive".into());
            }
            if let Some(z) = p.zoom {
                if !(z.tile_fraction > 0.0 && z.tile_fraction <= 1.0) {
                    errors.push("eval.profile.zoom.tile_fraction must lie in (0, 1]".into());
                }
            }
        }
        if self.mode == Mode::Eval {
            if self.eval.dataset.is_none() {
                errors.push("eval.dataset is required in eval mode".into());
            }
            if self.eval.profile.is_none() {
                errors.push("eval.profile is required in eval mode (profiles are pinned per model)".into());
            }
        }
        if errors.is_empty() {
            Ok(())
        } else {
            Err(errors)
        }
    }

    /// Pretty JSON of the fully resolved config.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }

    /// Write `run.json` into the run directory, creating it.
    pub fn freeze(&self) -> Result<PathBuf, ConfigError> {
        let err = |p: &Path| {
            let path = p.display().to_string();
            move |source| ConfigError::Write { path, source }
        };
        fs::create_dir_all(&self.run_dir).map_err(err(&self.run_dir))?;
        let path = self.run_dir.join("run.json");
        fs::write(&path, self.to_json()).map_err(err(&path))?;
        Ok(path)
    }
}

pub fn load_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = fs::read_to_string(path)
        .map_err(|source| ConfigError::Read { path: path.display().to_string(), source })?;
    RunConfig::from_json(&text).map_err(|errors| ConfigError::Invalid { path: path.display().to_string(), errors })
}
