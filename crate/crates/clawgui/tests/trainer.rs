use std::collections::BTreeMap;
use std::sync::Arc;

use clawgui::envpool::{EnvPool, PoolConfig, SimFactory};
use clawgui::suite::Suite;
use clawgui::trainer::{collect_group, evaluate_policy, train, OutcomeKind, TrainConfig, TrainContext, TrainError};
use clawgui_core::credit::Estimator;
use clawgui_core::policy::{OracleGreedyPolicy, UniformPolicy};
use clawgui_core::reward::MockJudge;
use clawgui_core::simdevice::FaultPlan;

fn ctx_for(suite: Suite, pool: PoolConfig) -> TrainContext {
    let p = Arc::new(EnvPool::new(pool, Arc::new(SimFactory::new(suite.registry.clone()))));
    TrainContext::new(suite, p)
}

fn small_pool() -> PoolConfig {
    PoolConfig { pool_size: 8, spare_count: 2, ..PoolConfig::default() }
}

/// Two easy tasks keep training runs short.
fn easy() -> Suite {
    Suite::builtin().filter(|t| t.difficulty.unwrap() <= 3)
}

#[test]
fn oracle_policy_solves_everything() {
    let s = Suite::builtin();
    let oracle = OracleGreedyPolicy::new(s.distance_tables());
    let r = evaluate_policy(&s, &s.tasks, &oracle, 1, 0).unwrap();
    assert_eq!(r.success_rate, 1.0);
    assert_eq!(r.episodes, 20);
}

#[test]
fn uniform_policy_rarely_solves_hard_tasks() {
    let s = Suite::builtin().filter(|t| t.difficulty.unwrap() >= 4);
    let r = evaluate_policy(&s, &s.tasks, &UniformPolicy, 10, 3).unwrap();
    assert!(r.success_rate <= 0.2, "{}", r.success_rate);
}

#[test]
fn empty_inputs_are_errors() {
    let s = Suite::builtin();
    assert!(matches!(evaluate_policy(&s, &[], &UniformPolicy, 1, 0), Err(TrainError::EmptySuite)));
    let ctx = ctx_for(s.filter(|_| false), small_pool());
    assert!(matches!(train(&ctx, &TrainConfig::default(), None), Err(TrainError::EmptySuite)));
    let ctx = ctx_for(easy(), small_pool());
    let cfg = TrainConfig { tasks: Some(vec!["no-such-task".into()]), ..TrainConfig::default() };
    assert!(matches!(train(&ctx, &cfg, None), Err(TrainError::UnknownTask(_))));
}

#[test]
fn groups_have_aligned_rewards() {
    let ctx = ctx_for(easy(), small_pool());
    let task = ctx.suite.tasks[0].clone();
    let cfg = TrainConfig { max_steps: 12, ..TrainConfig::default() };
    let g = collect_group(&ctx, &task, &UniformPolicy, &cfg, 0).unwrap();
    assert_eq!(g.group.size(), 8);
    assert_eq!(g.skipped, 0);
    for (t, sig) in g.group.trajectories.iter().zip(&g.signals) {
        assert!(!t.steps.is_empty() && t.steps.len() <= 12);
        let sum: f64 = t.rewards().iter().sum();
        assert!((sum - sig.aggregate()).abs() < 1e-12);
        assert_eq!(t.outcome, sig.outcome());
    }
    // Same update index, same seed: same group.
    let again = collect_group(&ctx, &task, &UniformPolicy, &cfg, 0).unwrap();
    assert_eq!(g.group, again.group);
}

#[test]
fn zero_updates_leave_the_policy_untouched() {
    let ctx = ctx_for(easy(), small_pool());
    let cfg = TrainConfig { max_updates: Some(0), ..TrainConfig::default() };
    let (r, _) = train(&ctx, &cfg, None).unwrap();
    assert!(r.updates.is_empty());
    assert_eq!(r.updates_planned, 0);
    assert_eq!(r.initial_eval, r.final_eval);
}

#[test]
fn training_is_reproducible_across_pool_shapes_and_faults() {
    let cfg = TrainConfig { max_updates: Some(4), epochs: 100, max_steps: 15, seed: 9, ..TrainConfig::default() };
    let (a, _) = train(&ctx_for(easy(), small_pool()), &cfg, None).unwrap();
    let (b, _) = train(&ctx_for(easy(), PoolConfig { pool_size: 3, spare_count: 1, ..small_pool() }), &cfg, None).unwrap();
    assert_eq!(a.final_params_digest, b.final_params_digest);
    assert_eq!(a.updates.len(), 4);
    let (c, _) = train(&ctx_for(easy(), small_pool()), &TrainConfig { seed: 10, ..cfg.clone() }, None).unwrap();
    assert_ne!(a.final_params_digest, c.final_params_digest);
    // Faults cause restarts and so change rollouts, but a faulty run still
    // completes and reproduces itself.
    let faulty = PoolConfig { fault_plan: Some(FaultPlan { stall_prob: 0.02, crash_prob: 0.02, rng_seed: 3 }), ..small_pool() };
    let (f1, _) = train(&ctx_for(easy(), faulty.clone()), &cfg, None).unwrap();
    let (f2, _) = train(&ctx_for(easy(), faulty), &cfg, None).unwrap();
    assert!(f1.total_rotations > 0);
    assert_eq!(f1.total_rotations, f2.total_rotations);
    assert_eq!(f1.final_params_digest, f2.final_params_digest);
}

#[test]
fn run_directory_records_what_the_gradient_consumed() {
    let dir = tempfile::tempdir().unwrap();
    let ctx = ctx_for(easy(), small_pool());
    let cfg = TrainConfig { max_updates: Some(2), max_steps: 10, ..TrainConfig::default() };
    let (r, params) = train(&ctx, &cfg, Some(dir.path())).unwrap();
    let adv = std::fs::read_to_string(dir.path().join("advantages.jsonl")).unwrap();
    let mut lines = 0;
    for l in adv.lines() {
        let v: serde_json::Value = serde_json::from_str(l).unwrap();
        assert_eq!(v["produced_digest"], v["consumed_digest"]);
        assert_eq!(v["estimator"], "gigpo");
        lines += 1;
    }
    let groups: usize = r.updates.iter().map(|u| u.groups_used).sum();
    assert_eq!(lines, groups);
    let trajs = std::fs::read_to_string(dir.path().join("trajectories.jsonl")).unwrap();
    assert_eq!(trajs.lines().count(), r.updates.iter().map(|u| u.trajectories).sum::<usize>());
    let saved: clawgui_core::policy::PolicyParams =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("params.json")).unwrap()).unwrap();
    assert_eq!(saved, params);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report["final_params_digest"], r.final_params_digest.as_str());
}

#[test]
fn outcome_judge_replaces_the_system_check() {
    let mut ctx = ctx_for(easy(), small_pool());
    let task = ctx.suite.tasks[0].clone();
    let cfg = TrainConfig { max_steps: 5, ..TrainConfig::default() };
    let cfg = TrainConfig { reward: clawgui::trainer::RewardConfig { outcome: OutcomeKind::Judge, ..cfg.reward }, ..cfg };
    assert!(matches!(collect_group(&ctx, &task, &UniformPolicy, &cfg, 0), Err(TrainError::MissingJudge(_))));
    ctx.judges.outcome = Some(Arc::new(MockJudge::always(true)));
    let g = collect_group(&ctx, &task, &UniformPolicy, &cfg, 0).unwrap();
    assert!(g.group.trajectories.iter().all(|t| t.outcome == 1));
    ctx.judges.outcome = Some(Arc::new(MockJudge::unavailable()));
    let g = collect_group(&ctx, &task, &UniformPolicy, &cfg, 0).unwrap();
    assert_eq!((g.group.size(), g.skipped), (0, 8));
}

#[test]
fn grpo_and_gigpo_share_the_rollout_stream() {
    // Same seed, same first update's rollouts: the estimator only changes
    // what happens after collection.
    let ctx = ctx_for(easy(), small_pool());
    let base = TrainConfig { max_updates: Some(1), max_steps: 10, ..TrainConfig::default() };
    let (a, _) = train(&ctx, &TrainConfig { estimator: Estimator::Grpo, ..base.clone() }, None).unwrap();
    let (b, _) = train(&ctx, &TrainConfig { estimator: Estimator::Gigpo, ..base }, None).unwrap();
    assert_eq!(a.updates[0].rollout_success_rate, b.updates[0].rollout_success_rate);
    assert_eq!(a.updates[0].mean_return, b.updates[0].mean_return);
    let _: BTreeMap<String, f64> = a.final_eval.per_task;
}
