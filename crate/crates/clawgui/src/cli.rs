//! `clawctl` subcommands. Exit codes: 0 success, 1 validation or usage
//! error, 2 runtime error.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};

use clawgui_core::eval::Percent;
use clawgui_core::policy::UniformPolicy;

use crate::config::{load_config, EnvBackendConfig, Mode, RunConfig};
use crate::envpool::{BackendFactory, EnvPool, RemoteFactory, SimFactory};
use crate::evalpipe::{self, load_dataset, load_official_table};
use crate::remote::RemoteJudge;
use crate::suite::Suite;
use crate::trainer::{self, Judges, OutcomeKind, PrmKind, TrainConfig, TrainContext};
use crate::wire::EndpointClient;

#[derive(Debug, Parser)]
#[command(name = "clawctl", version, about = "Train GUI agents on simulated devices and run evaluation pipelines")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train the linear policy on the shipped task suite.
    Train {
        #[arg(long)]
        config: PathBuf,
    },
    /// Evaluation stages: infer, judge, metric, report.
    #[command(subcommand)]
    Eval(EvalCommand),
    /// Environment pool tools.
    #[command(subcommand)]
    Env(EnvCommand),
    /// Synthetic benchmark tools.
    #[command(subcommand)]
    Bench(BenchCommand),
}

#[derive(Debug, Subcommand)]
enum EvalCommand {
    /// Query the endpoint for every sample, writing prediction shards.
    Infer {
        #[arg(long)]
        config: PathBuf,
    },
    /// Judge prediction shards, writing judgments.jsonl.
    Judge(JudgeArgs),
    /// Aggregate judgments into metrics.json.
    Metric(MetricArgs),
    /// Compare scores against the official table, writing reproduction.json.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
struct JudgeArgs {
    /// Supplies the dataset, run directory and judge tolerances.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Directory holding pred.shard-<k>.jsonl files.
    #[arg(long)]
    predictions: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct MetricArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    judgments: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// Adds the run's metrics.json under the profile's model id and the
    /// configured benchmark name.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Official score table (TOML); the bundled table by default.
    #[arg(long)]
    table: Option<PathBuf>,
    /// Extra scores as MODEL:BENCHMARK:PATH to a metrics.json.
    #[arg(long = "metrics", value_name = "MODEL:BENCHMARK:PATH")]
    metrics: Vec<String>,
    /// Compare only the supplied scores, ignoring the table's own
    /// reproduced column.
    #[arg(long)]
    only_supplied: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum EnvCommand {
    /// Build the pool, optionally run episodes with a uniform policy, and
    /// print its status.
    Doctor {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        episodes: u64,
    },
}

#[derive(Debug, Subcommand)]
enum BenchCommand {
    /// Write a synthetic grounding benchmark: images/ and dataset.jsonl.
    Gen {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

fn config(path: &Path, mode: Mode) -> Result<RunConfig, CliError> {
    let cfg = load_config(path).map_err(|e| CliError::Validation(e.to_string()))?;
    if cfg.mode != mode {
        return Err(CliError::Validation(format!(
            "{}: mode is {:?} but this command needs {:?}",
            path.display(),
            cfg.mode.as_str(),
            mode.as_str()
        )));
    }
    Ok(cfg)
}

fn optional_config(path: Option<&Path>, mode: Mode) -> Result<Option<RunConfig>, CliError> {
    path.map(|p| config(p, mode)).transpose()
}

fn require<T>(v: Option<T>, what: &str) -> Result<T, CliError> {
    v.ok_or_else(|| CliError::Validation(format!("{what} is required (pass it or --config)")))
}

fn build_pool(cfg: &RunConfig, suite: &Suite) -> Result<(Arc<EnvPool>, Option<Arc<SimFactory>>), CliError> {
    let (factory, sim): (Arc<dyn BackendFactory>, _) = match &cfg.env_backend {
        EnvBackendConfig::Simulated => {
            let f = Arc::new(SimFactory::new(suite.registry.clone()));
            (f.clone(), Some(f))
        }
        EnvBackendConfig::Remote { urls } => (
            Arc::new(RemoteFactory::new(urls.clone(), Duration::from_millis(cfg.pool.health_timeout_ms))),
            None,
        ),
    };
    Ok((Arc::new(EnvPool::new(cfg.pool.clone(), factory)), sim))
}

fn judges(cfg: &RunConfig) -> Result<Judges, CliError> {
    let Some(spec) = &cfg.judge_endpoint else { return Ok(Judges::default()) };
    let client = EndpointClient::new(spec.clone()).map_err(|e| CliError::Validation(e.to_string()))?;
    let judge = Arc::new(RemoteJudge::new(client));
    let mut j = Judges::default();
    if cfg.train.reward.prm == PrmKind::Remote {
        j.step = Some(judge.clone());
    }
    if cfg.train.reward.outcome == OutcomeKind::Judge {
        j.outcome = Some(judge);
    }
    Ok(j)
}

fn cmd_train(path: &Path) -> Result<(), CliError> {
    let cfg = config(path, Mode::Train)?;
    let frozen = cfg.freeze().map_err(runtime)?;
    log::info!("resolved config frozen to {}", frozen.display());
    let suite = Suite::builtin();
    let judges = judges(&cfg)?;
    let (pool, _) = build_pool(&cfg, &suite)?;
    let mut ctx = TrainContext::new(suite, pool.clone());
    ctx.judges = judges;
    let (report, _) = trainer::train(&ctx, &cfg.train, Some(&cfg.run_dir)).map_err(runtime)?;
    pool.teardown_all();
    println!(
        "trained {} updates with {:?}: greedy success {:.2} -> {:.2}; rotations {}; skipped episodes {}",
        report.updates.len(),
        report.estimator,
        report.initial_eval.success_rate,
        report.final_eval.success_rate,
        report.total_rotations,
        report.skipped_episodes
    );
    println!("run directory: {}", cfg.run_dir.display());
    Ok(())
}

fn cmd_infer(path: &Path) -> Result<(), CliError> {
    let cfg = config(path, Mode::Eval)?;
    let dataset_path = cfg.eval.dataset.clone().expect("validated");
    let profile = cfg.eval.profile.clone().expect("validated");
    let client = EndpointClient::new(cfg.endpoint.clone()).map_err(|e| CliError::Validation(e.to_string()))?;
    let samples = load_dataset(&dataset_path).map_err(|e| CliError::Validation(e.to_string()))?;
    cfg.freeze().map_err(runtime)?;
    let root = dataset_path.parent().unwrap_or(Path::new("."));
    let out = cfg.run_dir.join("predictions");
    let s = evalpipe::infer(&samples, root, &profile, &client, &cfg.eval.infer, &out).map_err(runtime)?;
    println!(
        "{} predictions in {} (computed shards {:?}, resumed {:?}, parse failures {})",
        s.predictions,
        out.display(),
        s.computed,
        s.skipped,
        s.parse_failures
    );
    Ok(())
}

fn cmd_judge(a: JudgeArgs) -> Result<(), CliError> {
    let cfg = optional_config(a.config.as_deref(), Mode::Eval)?;
    let dataset = require(a.dataset.or_else(|| cfg.as_ref().and_then(|c| c.eval.dataset.clone())), "--dataset")?;
    let preds = require(a.predictions.or_else(|| cfg.as_ref().map(|c| c.run_dir.join("predictions"))), "--predictions")?;
    let out = require(a.out.or_else(|| cfg.as_ref().map(|c| c.run_dir.clone())), "--out")?;
    let tolerance = cfg.as_ref().and_then(|c| c.eval.profile.as_ref()).map(|p| p.action_tolerance).unwrap_or_default();
    let samples = load_dataset(&dataset).map_err(|e| CliError::Validation(e.to_string()))?;
    let results = evalpipe::judge_stage(&samples, &preds, &tolerance, &out).map_err(runtime)?;
    let correct = results.iter().filter(|r| r.correct).count();
    println!("judged {} samples ({correct} correct) -> {}", results.len(), out.join("judgments.jsonl").display());
    Ok(())
}

fn cmd_metric(a: MetricArgs) -> Result<(), CliError> {
    let cfg = optional_config(a.config.as_deref(), Mode::Eval)?;
    let dataset = require(a.dataset.or_else(|| cfg.as_ref().and_then(|c| c.eval.dataset.clone())), "--dataset")?;
    let judgments =
        require(a.judgments.or_else(|| cfg.as_ref().map(|c| c.run_dir.join("judgments.jsonl"))), "--judgments")?;
    let out = require(a.out.or_else(|| cfg.as_ref().map(|c| c.run_dir.clone())), "--out")?;
    let samples = load_dataset(&dataset).map_err(|e| CliError::Validation(e.to_string()))?;
    let report = evalpipe::metric_stage(&samples, &judgments, &out).map_err(runtime)?;
    println!(
        "accuracy {}% ({}/{}) -> {}",
        report.overall.accuracy,
        report.overall.correct,
        report.overall.total,
        out.join("metrics.json").display()
    );
    Ok(())
}

fn read_score(path: &Path) -> Result<Percent, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
    let m: clawgui_core::eval::MetricReport =
        serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
    Ok(m.overall.accuracy)
}

fn cmd_report(a: ReportArgs) -> Result<(), CliError> {
    let cfg = optional_config(a.config.as_deref(), Mode::Eval)?;
    let table_path = a.table.or_else(|| cfg.as_ref().and_then(|c| c.eval.official_table.clone()));
    let mut table = load_official_table(table_path.as_deref()).map_err(|e| CliError::Validation(e.to_string()))?;
    if a.only_supplied {
        table.cells.iter_mut().for_each(|c| c.reproduced = None);
    }
    let mut scores = Vec::new();
    if let Some(c) = &cfg {
        let model = c.eval.profile.as_ref().map(|p| p.model_id.clone()).expect("validated");
        scores.push((model, c.eval.benchmark.clone(), read_score(&c.run_dir.join("metrics.json"))?));
    }
    for spec in &a.metrics {
        let parts: Vec<&str> = spec.splitn(3, ':').collect();
        let [model, bench, path] = parts[..] else {
            return Err(CliError::Validation(format!("--metrics {spec:?}: expected MODEL:BENCHMARK:PATH")));
        };
        scores.push((model.to_string(), bench.to_string(), read_score(Path::new(path))?));
    }
    let out = require(a.out.or_else(|| cfg.as_ref().map(|c| c.run_dir.clone())), "--out")?;
    let report = evalpipe::report_stage(&table, &scores, &out).map_err(runtime)?;
    for r in &report.rows {
        let off = r.official.map_or("-".to_string(), |o| o.to_string());
        println!("{:<24} {:<16} official {:>6} reproduced {:>6} {:?}", r.model, r.benchmark, off, r.reproduced, r.verdict);
    }
    println!(
        "pass {} fail {} no baseline {}; reproduction rate {}",
        report.pass,
        report.fail,
        report.no_baseline,
        report.rate_display.as_deref().map_or("n/a".to_string(), |r| format!("{r}%"))
    );
    println!("-> {}", out.join("reproduction.json").display());
    Ok(())
}

fn cmd_doctor(path: Option<&Path>, episodes: u64) -> Result<(), CliError> {
    let cfg = match path {
        Some(p) => config(p, Mode::Doctor)?,
        None => RunConfig { mode: Mode::Doctor, ..RunConfig::default() },
    };
    let suite = Suite::builtin();
    let (pool, sim) = build_pool(&cfg, &suite)?;
    if episodes > 0 {
        let ctx = TrainContext::with_tables(suite.clone(), Default::default(), pool.clone());
        let mut tc: TrainConfig = cfg.train.clone();
        tc.reward.prm = PrmKind::Off;
        tc.reward.outcome = OutcomeKind::System;
        let mut done = 0u64;
        let mut round = 0u64;
        while done < episodes {
            let task = &suite.tasks[(round as usize) % suite.tasks.len()];
            tc.group_size = (episodes - done).min(cfg.train.group_size as u64) as usize;
            let g = trainer::collect_group(&ctx, task, &UniformPolicy, &tc, round).map_err(runtime)?;
            done += tc.group_size as u64;
            round += 1;
            log::debug!("round {round}: {} episodes, {} skipped", g.group.size(), g.skipped);
        }
    }
    print!("{}", pool.doctor());
    if let Some(f) = sim {
        println!("faults injected: {}", f.faults_fired());
    }
    Ok(())
}

fn cmd_bench(out: &Path, path: Option<&Path>, samples: Option<usize>, seed: Option<u64>) -> Result<(), CliError> {
    let mut bench = match path {
        Some(p) => config(p, Mode::Benchgen)?.bench,
        None => Default::default(),
    };
    if let Some(n) = samples {
        bench.samples = n;
    }
    if let Some(s) = seed {
        bench.seed = s;
    }
    let mut errors = Vec::new();
    bench.validate("bench", &mut errors);
    if !errors.is_empty() {
        return Err(CliError::Validation(errors.join("\n")));
    }
    let written = evalpipe::generate(&bench, out).map_err(runtime)?;
    println!("wrote {} samples to {}", written.len(), out.join("dataset.jsonl").display());
    Ok(())
}

pub fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Train { config } => cmd_train(&config),
        Command::Eval(EvalCommand::Infer { config }) => cmd_infer(&config),
        Command::Eval(EvalCommand::Judge(a)) => cmd_judge(a),
        Command::Eval(EvalCommand::Metric(a)) => cmd_metric(a),
        Command::Eval(EvalCommand::Report(a)) => cmd_report(a),
        Command::Env(EnvCommand::Doctor { config, episodes }) => cmd_doctor(config.as_deref(), episodes),
        Command::Bench(BenchCommand::Gen { out, config, samples, seed }) => {
            cmd_bench(&out, config.as_deref(), samples, seed)
        }
    }
}

/// Parse `args` and run; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    print!("{e}");
                    0
                }
                ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => {
                    eprint!("{e}");
                    1
                }
                _ => {
                    eprint!("{}", e.render());
                    1
                }
            };
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn metrics_flag_needs_three_parts() {
        let tmp = std::env::temp_dir().join("clawctl-report-args");
        let a = ReportArgs {
            config: None,
            table: None,
            metrics: vec!["only-two:parts".into()],
            only_supplied: false,
            out: Some(tmp),
        };
        assert!(matches!(cmd_report(a), Err(CliError::Validation(_))));
    }
}
