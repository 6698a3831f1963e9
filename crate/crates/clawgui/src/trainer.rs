//! Rollout collection over the environment pool and the policy-gradient
//! training loop for the linear-softmax policy.
//!
//! Each update samples `batch_tasks` tasks, collects a group of
//! `group_size` rollouts per task in parallel, estimates advantages with
//! the configured estimator and takes one ascent step on the summed
//! gradient. Everything random is derived from `(seed, update, task,
//! rollout, restart)`, so a run is reproducible whatever the thread
//! schedule and env assignment.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clawgui_core::credit::{AdvantageEstimator, CreditConfig, CreditError, Estimator};
use clawgui_core::digest::{derive_seed, str_label, to_hex};
use clawgui_core::policy::{
    policy_gradient, update, FeatureSpec, LinearSoftmaxPolicy, Policy, PolicyError, PolicyParams,
    DEFAULT_TEMPERATURE, TOY_LEARNING_RATE,
};
use clawgui_core::reward::{
    compose, outcome_reward, try_prm_step_score, DistanceOracle, JudgeRequest, ObservationRef, OutcomeJudge,
    OutcomeMode, PrmMode, RewardError, RewardSignal, StepJudge, DEFAULT_LAMBDA_STEP,
};
use clawgui_core::rollout::{RolloutGroup, StepRecord, Termination, Trajectory};
use clawgui_core::simdevice::{anchor_hash, verify_outcome, Action, Device, DistanceTable, ScreenState, TaskSpec};
use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::envpool::{BackendError, EnvPool, PoolError};
use crate::suite::Suite;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrmKind {
    /// 1 when the oracle distance to the goal strictly decreased.
    Rule,
    /// Remote step judge.
    Remote,
    /// No dense reward.
    Off,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeKind {
    System,
    Judge,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RewardConfig {
    pub lambda_step: f64,
    pub prm: PrmKind,
    pub outcome: OutcomeKind,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self { lambda_step: DEFAULT_LAMBDA_STEP, prm: PrmKind::Rule, outcome: OutcomeKind::System }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub group_size: usize,
    pub temperature: f64,
    pub learning_rate: f64,
    pub epochs: u64,
    pub batch_tasks: usize,
    /// Cap on updates across all epochs.
    pub max_updates: Option<u64>,
    pub max_steps: u32,
    pub estimator: Estimator,
    pub credit: CreditConfig,
    pub reward: RewardConfig,
    pub seed: u64,
    /// Half-width of the uniform random initialization.
    pub init_scale: f64,
    /// Greedy evaluation every this many updates; 0 evaluates only at the
    /// start and the end.
    pub eval_every: u64,
    /// Restrict training to these task ids.
    pub tasks: Option<Vec<String>>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            group_size: 8,
            temperature: DEFAULT_TEMPERATURE,
            learning_rate: TOY_LEARNING_RATE,
            epochs: 3,
            batch_tasks: 8,
            max_updates: None,
            max_steps: clawgui_core::simdevice::DEFAULT_MAX_STEPS,
            estimator: Estimator::Gigpo,
            credit: CreditConfig::default(),
            reward: RewardConfig::default(),
            seed: 0,
            init_scale: 0.1,
            eval_every: 0,
            tasks: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, prefix: &str, errors: &mut Vec<String>) {
        if self.group_size < 2 {
            errors.push(format!("{prefix}.group_size must be at least 2"));
        }
        if !(self.temperature.is_finite() && self.temperature > 0.0) {
            errors.push(format!("{prefix}.temperature must be positive"));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            errors.push(format!("{prefix}.learning_rate must be finite and non-negative"));
        }
        if self.batch_tasks == 0 {
            errors.push(format!("{prefix}.batch_tasks must be at least 1"));
        }
        if self.max_steps == 0 {
            errors.push(format!("{prefix}.max_steps must be at least 1"));
        }
        if !(self.init_scale.is_finite() && self.init_scale >= 0.0) {
            errors.push(format!("{prefix}.init_scale must be finite and non-negative"));
        }
        if !(self.reward.lambda_step.is_finite() && self.reward.lambda_step >= 0.0) {
            errors.push(format!("{prefix}.reward.lambda_step must be finite and non-negative"));
        }
        if let Err(e) = self.credit.validate() {
            errors.push(format!("{prefix}.credit: {e}"));
        }
    }

    /// Number of updates `train` will run for `n_tasks` tasks.
    pub fn planned_updates(&self, n_tasks: usize) -> u64 {
        let per_epoch = n_tasks.div_ceil(self.batch_tasks.max(1)) as u64;
        let total = self.epochs * per_epoch;
        self.max_updates.map_or(total, |m| m.min(total))
    }
}

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error(transparent)]
    Pool(#[from] PoolError),
    #[error(transparent)]
    Credit(#[from] CreditError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Reward(#[from] RewardError),
    #[error("run directory: {0}")]
    Io(#[from] std::io::Error),
    #[error("suite is empty")]
    EmptySuite,
    #[error("unknown task {0}")]
    UnknownTask(String),
    #[error("{0} needs a judge but none is configured")]
    MissingJudge(&'static str),
    #[error("update {update}, task {task}: consumed advantages differ from the produced ones")]
    AdvantageMismatch { update: u64, task: String },
}

/// Remote judges, when the reward config asks for them.
#[derive(Clone, Default)]
pub struct Judges {
    pub outcome: Option<Arc<dyn OutcomeJudge>>,
    pub step: Option<Arc<dyn StepJudge>>,
}

/// Table lookup without the search fallback; states outside the table
/// count as unreachable.
struct TableOracle<'a>(&'a DistanceTable);

impl DistanceOracle for TableOracle<'_> {
    fn distance(&self, state: &ScreenState) -> Option<u32> {
        self.0.lookup(state).flatten()
    }
}

/// Everything rollouts share: the suite, its distance tables, the pool.
pub struct TrainContext {
    pub suite: Suite,
    pub tables: BTreeMap<String, Arc<DistanceTable>>,
    pub pool: Arc<EnvPool>,
    pub spec: Arc<FeatureSpec>,
    pub judges: Judges,
}

impl TrainContext {
    /// Builds distance tables for every task in the suite.
    pub fn new(suite: Suite, pool: Arc<EnvPool>) -> Self {
        let tables = suite.tasks.iter().map(|t| (t.task_id.clone(), Arc::new(suite.distance_table(t)))).collect();
        Self::with_tables(suite, tables, pool)
    }

    pub fn with_tables(suite: Suite, tables: BTreeMap<String, Arc<DistanceTable>>, pool: Arc<EnvPool>) -> Self {
        let spec = Arc::new(FeatureSpec::new(&suite.registry));
        Self { suite, tables, pool, spec, judges: Judges::default() }
    }
}

/// One collected group, or the reason it is unusable.
#[derive(Debug)]
pub struct GroupOutcome {
    pub group: RolloutGroup,
    pub signals: Vec<RewardSignal>,
    /// Episodes skipped because no spare was left.
    pub skipped: usize,
    pub rotations: u64,
}

struct Episode {
    trajectory: Trajectory,
    signal: RewardSignal,
    rotations: u64,
}

enum EpisodeError {
    Skipped,
    Fatal(TrainError),
}

fn step_score(
    cfg: &RewardConfig,
    judges: &Judges,
    table: Option<&DistanceTable>,
    task: &TaskSpec,
    prev: &ScreenState,
    cur: &ScreenState,
    history: &[Action],
) -> f64 {
    let mode = match (cfg.prm, table, &judges.step) {
        (PrmKind::Off, ..) => return 0.0,
        (PrmKind::Rule, Some(t), _) => return rule_score(t, prev, cur),
        (PrmKind::Remote, _, Some(j)) => PrmMode::Remote(j.as_ref()),
        _ => return 0.0,
    };
    let req = JudgeRequest {
        instruction: task.instruction.clone(),
        prev_obs: Some(ObservationRef::Screen { state: prev.clone() }),
        cur_obs: ObservationRef::Screen { state: cur.clone() },
        action_history: history.to_vec(),
    };
    try_prm_step_score(&req, mode).unwrap_or_else(|e| {
        log::warn!("{}: step judge failed ({e}); scoring 0", task.task_id);
        0.0
    })
}

/// Rule PRM straight from the table, without building a judge request.
fn rule_score(table: &DistanceTable, prev: &ScreenState, cur: &ScreenState) -> f64 {
    let oracle = TableOracle(table);
    let closer = match (oracle.distance(prev), oracle.distance(cur)) {
        (Some(p), Some(c)) => c < p,
        (None, Some(_)) => true,
        _ => false,
    };
    if closer {
        1.0
    } else {
        0.0
    }
}

/// Run one rollout on a leased env. A fault triggers a health check and a
/// spare rotation, and the episode restarts from reset; the partial
/// trajectory is discarded.
#[allow(clippy::too_many_arguments)]
fn run_episode(
    ctx: &TrainContext,
    task: &TaskSpec,
    policy: &dyn Policy,
    cfg: &TrainConfig,
    worker_id: &str,
    rollout_id: String,
    seed: u64,
) -> Result<Episode, EpisodeError> {
    let table = ctx.tables.get(&task.task_id).map(Arc::as_ref);
    let (mut lease, mut obs) = match ctx.pool.acquire(task, worker_id) {
        Ok(x) => x,
        Err(PoolError::SparesExhausted) => return Err(EpisodeError::Skipped),
        Err(e) => return Err(EpisodeError::Fatal(e.into())),
    };
    let mut rotations = 0u64;
    'restart: loop {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[rotations]));
        let mut steps: Vec<StepRecord> = Vec::new();
        let mut scores: Vec<f64> = Vec::new();
        let mut history: Vec<Action> = Vec::new();
        let mut ended_by_done = false;
        for _ in 0..task.max_steps {
            let decision = policy.decide(&obs, task, &mut rng);
            let out = match lease.step(&decision.action) {
                Ok(out) => out,
                Err(BackendError::Faulted(_)) => {
                    ctx.pool.health_check(&mut lease);
                    match ctx.pool.rotate_spare(lease) {
                        Ok((l, o)) => {
                            lease = l;
                            obs = o;
                            rotations += 1;
                            continue 'restart;
                        }
                        Err(PoolError::SparesExhausted) => {
                            log::warn!("{rollout_id}: no spare left; skipping the episode");
                            return Err(EpisodeError::Skipped);
                        }
                        Err(e) => return Err(EpisodeError::Fatal(e.into())),
                    }
                }
                Err(e) => {
                    let _ = ctx.pool.release(lease);
                    return Err(EpisodeError::Fatal(PoolError::Backend(e).into()));
                }
            };
            history.push(decision.action.clone());
            scores.push(step_score(&cfg.reward, &ctx.judges, table, task, &obs, &out.observation, &history));
            ended_by_done = matches!(decision.action, Action::Done { .. });
            steps.push(StepRecord {
                anchor: anchor_hash(&obs),
                action: decision.action,
                logprob: decision.logprob,
                reward: 0.0,
                candidate_count: decision.candidate_count,
                candidate_index: decision.candidate_index,
                observation: Some(std::mem::replace(&mut obs, out.observation)),
            });
            if out.terminal {
                break;
            }
        }
        if let Err(e) = ctx.pool.release(lease) {
            return Err(EpisodeError::Fatal(e.into()));
        }
        let outcome = match (cfg.reward.outcome, &ctx.judges.outcome) {
            (OutcomeKind::System, _) => outcome_reward(&obs, task, &history, OutcomeMode::System),
            (OutcomeKind::Judge, Some(j)) => {
                match outcome_reward(&obs, task, &history, OutcomeMode::Judge(j.as_ref())) {
                    Ok(o) => Ok(o),
                    Err(e) => {
                        // Unjudged episodes carry no valid reward.
                        log::warn!("{rollout_id}: outcome judge failed ({e}); excluding the episode");
                        return Err(EpisodeError::Skipped);
                    }
                }
            }
            (OutcomeKind::Judge, None) => return Err(EpisodeError::Fatal(TrainError::MissingJudge("outcome"))),
        }
        .map_err(|e| EpisodeError::Fatal(e.into()))?;
        let signal =
            RewardSignal::new(outcome, scores, cfg.reward.lambda_step).map_err(|e| EpisodeError::Fatal(e.into()))?;
        let rewards = compose(&signal, steps.len()).map_err(|e| EpisodeError::Fatal(e.into()))?;
        for (s, r) in steps.iter_mut().zip(rewards) {
            s.reward = r;
        }
        let termination = if rotations > 0 {
            Termination::RotatedRestart
        } else if ended_by_done {
            Termination::Done
        } else {
            Termination::StepBudget
        };
        let trajectory = Trajectory { task_id: task.task_id.clone(), rollout_id, steps, outcome, termination };
        return Ok(Episode { trajectory, signal, rotations });
    }
}

/// Collect `group_size` rollouts of `task` in parallel. Rollout `i` runs on
/// worker `rollout-i` with seed `derive_seed(seed, [update, task, i])`.
pub fn collect_group(
    ctx: &TrainContext,
    task: &TaskSpec,
    policy: &dyn Policy,
    cfg: &TrainConfig,
    update: u64,
) -> Result<GroupOutcome, TrainError> {
    let mut task = task.clone();
    task.max_steps = cfg.max_steps;
    let results: Vec<Result<Episode, EpisodeError>> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..cfg.group_size)
            .map(|i| {
                let task = &task;
                s.spawn(move || {
                    let seed = derive_seed(cfg.seed, &[update, str_label(&task.task_id), i as u64]);
                    let rollout_id = format!("u{update}/{}/{i}", task.task_id);
                    run_episode(ctx, task, policy, cfg, &format!("rollout-{i}"), rollout_id, seed)
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("rollout worker panicked")).collect()
    });
    let mut trajectories = Vec::new();
    let mut signals = Vec::new();
    let mut skipped = 0;
    let mut rotations = 0;
    for r in results {
        match r {
            Ok(ep) => {
                rotations += ep.rotations;
                trajectories.push(ep.trajectory);
                signals.push(ep.signal);
            }
            Err(EpisodeError::Skipped) => skipped += 1,
            Err(EpisodeError::Fatal(e)) => return Err(e),
        }
    }
    let group = RolloutGroup::new(task.task_id.clone(), trajectories).expect("all rollouts share the task");
    Ok(GroupOutcome { group, signals, skipped, rotations })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub success_rate: f64,
    pub successes: u64,
    pub episodes: u64,
    pub per_task: BTreeMap<String, f64>,
}

/// Success rate of `policy` on `tasks`, `episodes_per_task` episodes each,
/// on fresh simulated devices. Greedy linear policies are deterministic, so
/// one episode per task suffices for them.
pub fn evaluate_policy(
    suite: &Suite,
    tasks: &[TaskSpec],
    policy: &dyn Policy,
    episodes_per_task: u64,
    seed: u64,
) -> Result<EvalResult, TrainError> {
    if tasks.is_empty() || episodes_per_task == 0 {
        return Err(TrainError::EmptySuite);
    }
    let mut device = Device::new(suite.registry.clone());
    let mut per_task = BTreeMap::new();
    let mut successes = 0;
    for task in tasks {
        let mut wins = 0;
        for ep in 0..episodes_per_task {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[str_label(&task.task_id), ep]));
            let mut obs = device.reset(task).map_err(|e| PoolError::Backend(e.into()))?;
            for _ in 0..task.max_steps {
                let d = policy.decide(&obs, task, &mut rng);
                let r = device.step(&d.action).map_err(|e| PoolError::Backend(e.into()))?;
                obs = r.observation;
                if r.terminal {
                    break;
                }
            }
            wins += u64::from(verify_outcome(&obs, task));
        }
        successes += wins;
        per_task.insert(task.task_id.clone(), wins as f64 / episodes_per_task as f64);
    }
    let episodes = episodes_per_task * tasks.len() as u64;
    Ok(EvalResult { success_rate: successes as f64 / episodes as f64, successes, episodes, per_task })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpdateRecord {
    pub update: u64,
    pub epoch: u64,
    pub tasks: Vec<String>,
    pub groups_used: usize,
    pub groups_dropped: usize,
    pub skipped_episodes: usize,
    pub trajectories: usize,
    /// Fraction of this update's rollouts that succeeded.
    pub rollout_success_rate: f64,
    pub mean_return: f64,
    pub rotations: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub greedy_success_rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub estimator: Estimator,
    pub seed: u64,
    pub updates_planned: u64,
    pub initial_eval: EvalResult,
    pub final_eval: EvalResult,
    pub updates: Vec<UpdateRecord>,
    pub total_rotations: u64,
    pub skipped_episodes: usize,
    pub final_params_digest: String,
}

#[derive(Serialize)]
struct TrajectoryLine<'a> {
    update: u64,
    trajectory: &'a Trajectory,
}

#[derive(Serialize)]
struct AdvantageLine<'a> {
    update: u64,
    task_id: &'a str,
    estimator: Estimator,
    produced_digest: String,
    consumed_digest: String,
    advantages: &'a clawgui_core::credit::AdvantageSet,
}

struct RunLogs {
    trajectories: BufWriter<File>,
    advantages: BufWriter<File>,
    dir: PathBuf,
}

impl RunLogs {
    fn create(dir: &Path) -> std::io::Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(Self {
            trajectories: BufWriter::new(File::create(dir.join("trajectories.jsonl"))?),
            advantages: BufWriter::new(File::create(dir.join("advantages.jsonl"))?),
            dir: dir.to_path_buf(),
        })
    }
}

fn write_line(w: &mut impl Write, value: &impl Serialize) -> std::io::Result<()> {
    serde_json::to_writer(&mut *w, value)?;
    w.write_all(b"\n")
}

fn params_digest(p: &PolicyParams) -> String {
    let mut w = clawgui_core::digest::CanonicalWriter::new();
    w.str(&p.version).u64(p.rows as u64);
    for &x in &p.weights {
        w.f64(x);
    }
    to_hex(&w.finish())
}

/// Seeded Fisher-Yates shuffle of task indices for one epoch.
fn epoch_order(n: usize, seed: u64, epoch: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[str_label("epoch"), epoch]));
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = (rng.next_u64() % (i as u64 + 1)) as usize;
        order.swap(i, j);
    }
    order
}

/// Greedy success rate of `params` on `tasks`.
pub fn greedy_eval(ctx: &TrainContext, tasks: &[TaskSpec], params: &PolicyParams) -> Result<EvalResult, TrainError> {
    let policy = LinearSoftmaxPolicy { spec: ctx.spec.clone(), params: params.clone(), temperature: 1.0, greedy: true };
    evaluate_policy(&ctx.suite, tasks, &policy, 1, 0)
}

/// Train the linear-softmax policy from a seeded random init. With a run
/// directory, trajectories, advantages and the report are written there.
pub fn train(ctx: &TrainContext, cfg: &TrainConfig, run_dir: Option<&Path>) -> Result<(RunReport, PolicyParams), TrainError> {
    let tasks: Vec<TaskSpec> = match &cfg.tasks {
        None => ctx.suite.tasks.clone(),
        Some(ids) => ids
            .iter()
            .map(|id| ctx.suite.task(id).cloned().ok_or_else(|| TrainError::UnknownTask(id.clone())))
            .collect::<Result<_, _>>()?,
    };
    if tasks.is_empty() {
        return Err(TrainError::EmptySuite);
    }
    let mut logs = run_dir.map(RunLogs::create).transpose()?;
    let mut params = PolicyParams::random(&ctx.spec, cfg.init_scale, derive_seed(cfg.seed, &[str_label("init")]));
    let initial_eval = greedy_eval(ctx, &tasks, &params)?;
    log::info!("initial greedy success rate {:.3}", initial_eval.success_rate);

    let planned = cfg.planned_updates(tasks.len());
    let mut updates = Vec::new();
    let mut total_rotations = 0;
    let mut skipped_total = 0;
    let mut u = 0u64;
    'epochs: for epoch in 0..cfg.epochs {
        let order = epoch_order(tasks.len(), cfg.seed, epoch);
        for batch in order.chunks(cfg.batch_tasks) {
            if u >= planned {
                break 'epochs;
            }
            let policy =
                LinearSoftmaxPolicy { spec: ctx.spec.clone(), params: params.clone(), temperature: cfg.temperature, greedy: false };
            let mut grad = vec![0.0; params.weights.len()];
            let mut rec = UpdateRecord {
                update: u,
                epoch,
                tasks: Vec::new(),
                groups_used: 0,
                groups_dropped: 0,
                skipped_episodes: 0,
                trajectories: 0,
                rollout_success_rate: 0.0,
                mean_return: 0.0,
                rotations: 0,
                greedy_success_rate: None,
            };
            let mut successes = 0usize;
            let mut used_trajectories = 0usize;
            let mut return_sum = 0.0;
            for &ti in batch {
                let task = &tasks[ti];
                rec.tasks.push(task.task_id.clone());
                let g = collect_group(ctx, task, &policy, cfg, u)?;
                rec.skipped_episodes += g.skipped;
                rec.rotations += g.rotations;
                rec.trajectories += g.group.size();
                successes += g.group.trajectories.iter().filter(|t| t.outcome == 1).count();
                return_sum += g.signals.iter().map(RewardSignal::aggregate).sum::<f64>();
                if let Some(l) = logs.as_mut() {
                    for t in &g.group.trajectories {
                        write_line(&mut l.trajectories, &TrajectoryLine { update: u, trajectory: t })?;
                    }
                }
                if g.group.size() < 2 {
                    log::warn!("update {u}: group for {} has {} rollouts; dropped", task.task_id, g.group.size());
                    rec.groups_dropped += 1;
                    continue;
                }
                let adv = cfg.estimator.estimate(&g.group, &cfg.credit)?;
                let mut t = task.clone();
                t.max_steps = cfg.max_steps;
                let gr = policy_gradient(&params, &ctx.spec, &t, &g.group, &adv, cfg.temperature)?;
                let produced = adv.combined_digest();
                if produced != gr.consumed_digest {
                    return Err(TrainError::AdvantageMismatch { update: u, task: task.task_id.clone() });
                }
                if let Some(l) = logs.as_mut() {
                    write_line(
                        &mut l.advantages,
                        &AdvantageLine {
                            update: u,
                            task_id: &task.task_id,
                            estimator: cfg.estimator,
                            produced_digest: to_hex(&produced),
                            consumed_digest: to_hex(&gr.consumed_digest),
                            advantages: &adv,
                        },
                    )?;
                }
                for (a, b) in grad.iter_mut().zip(&gr.values) {
                    *a += b;
                }
                rec.groups_used += 1;
                used_trajectories += g.group.size();
            }
            // Mean over the trajectories that fed the gradient.
            let used: usize = used_trajectories.max(1);
            for g in &mut grad {
                *g /= used as f64;
            }
            params = update(&params, &grad, cfg.learning_rate)?;
            if rec.trajectories > 0 {
                rec.rollout_success_rate = successes as f64 / rec.trajectories as f64;
                rec.mean_return = return_sum / rec.trajectories as f64;
            }
            total_rotations += rec.rotations;
            skipped_total += rec.skipped_episodes;
            u += 1;
            if cfg.eval_every > 0 && u % cfg.eval_every == 0 && u < planned {
                rec.greedy_success_rate = Some(greedy_eval(ctx, &tasks, &params)?.success_rate);
            }
            log::info!(
                "update {} rollout sr {:.3} mean return {:.3}{}",
                rec.update,
                rec.rollout_success_rate,
                rec.mean_return,
                rec.greedy_success_rate.map(|s| format!(" greedy sr {s:.3}")).unwrap_or_default()
            );
            updates.push(rec);
        }
    }
    let final_eval = greedy_eval(ctx, &tasks, &params)?;
    let report = RunReport {
        estimator: cfg.estimator,
        seed: cfg.seed,
        updates_planned: planned,
        initial_eval,
        final_eval,
        updates,
        total_rotations,
        skipped_episodes: skipped_total,
        final_params_digest: params_digest(&params),
    };
    if let Some(mut l) = logs {
        l.trajectories.flush()?;
        l.advantages.flush()?;
        std::fs::write(l.dir.join("report.json"), serde_json::to_string_pretty(&report).expect("report serializes"))?;
        std::fs::write(l.dir.join("params.json"), serde_json::to_string(&params).expect("params serialize"))?;
    }
    Ok((report, params))
}
