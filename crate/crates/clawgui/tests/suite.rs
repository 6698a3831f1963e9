use std::collections::{BTreeMap, BTreeSet, VecDeque};

use clawgui::suite::{solve, Suite};
use clawgui_core::simdevice::{canonical_actions, canonical_bytes, oracle_distance, Device, ScreenState, TaskSpec};

/// Plain breadth-first search over rendered states via `preview`, kept
/// separate from the crate's reverse-search table.
fn bfs_distance(suite: &Suite, task: &TaskSpec) -> Option<u32> {
    let app = suite.registry.get(&task.app_id).unwrap();
    let start = app.render(&app.start_screen, &app.initial_vars(task.init_seed));
    let goal = |s: &ScreenState| task.goal.holds(&s.screen_id, &s.var_bindings);
    let mut seen = BTreeSet::from([canonical_bytes(&start)]);
    let mut q = VecDeque::from([(start, 0u32)]);
    while let Some((s, d)) = q.pop_front() {
        if goal(&s) {
            return Some(d);
        }
        for a in canonical_actions(app, &s, task) {
            if let Some(n) = app.preview(&s, &a) {
                if seen.insert(canonical_bytes(&n)) {
                    q.push_back((n, d + 1));
                }
            }
        }
    }
    None
}

#[test]
fn shipped_suite_spans_difficulties_two_to_ten() {
    let s = Suite::builtin();
    assert_eq!(s.tasks.len(), 20);
    let d: BTreeSet<u32> = s.tasks.iter().map(|t| t.difficulty.unwrap()).collect();
    assert_eq!(d.first(), Some(&2));
    assert_eq!(d.last(), Some(&10));
    assert!(s.variable_length().tasks.len() >= 3);
    let apps: BTreeSet<&str> = s.tasks.iter().map(|t| t.app_id.as_str()).collect();
    assert_eq!(apps.len(), 5);
}

#[test]
fn stored_difficulty_is_the_true_shortest_path() {
    let s = Suite::builtin();
    let mut by_task = BTreeMap::new();
    for t in &s.tasks {
        let want = t.difficulty.unwrap();
        assert_eq!(bfs_distance(&s, t), Some(want), "{}", t.task_id);
        let app = s.registry.get(&t.app_id).unwrap();
        let start = app.render(&app.start_screen, &app.initial_vars(t.init_seed));
        assert_eq!(oracle_distance(app, &start, t), Some(want), "{}", t.task_id);
        let plan = solve(&s.distance_table(t)).unwrap();
        assert_eq!(plan.len() as u32, want + 1);
        by_task.insert(t.task_id.clone(), want);
    }
    assert_eq!(by_task.len(), 20);
}

#[test]
fn reference_solutions_replay_to_success() {
    let s = Suite::builtin();
    let mut dev = Device::new(s.registry.clone());
    for t in &s.tasks {
        assert_eq!(t.reference_solution.len() as u32, t.difficulty.unwrap() + 1, "{}", t.task_id);
        dev.reset(t).unwrap();
        let mut last = None;
        for a in &t.reference_solution {
            let r = dev.step(a).unwrap();
            assert!(r.invalid.is_none(), "{}: {a:?} invalid", t.task_id);
            last = Some(r);
        }
        let last = last.unwrap();
        assert!(last.terminal);
        assert_eq!(last.outcome_hint, Some(1), "{}", t.task_id);
    }
}

#[test]
fn suites_load_from_a_directory() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("data");
    let s = Suite::load_dir(&dir).unwrap();
    let b = Suite::builtin();
    assert_eq!(s.tasks, b.tasks);
    assert!(Suite::load_dir(&dir.join("missing")).is_err());
}

#[test]
fn duplicate_or_dangling_tasks_are_rejected() {
    let b = Suite::builtin();
    let mut tasks = b.tasks.clone();
    tasks.push(tasks[0].clone());
    assert!(Suite::new(b.registry.clone(), tasks).is_err());
    let mut t = b.tasks[0].clone();
    t.app_id = "nope".into();
    assert!(Suite::new(b.registry.clone(), vec![t]).is_err());
}
