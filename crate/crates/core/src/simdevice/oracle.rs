//! Privileged shortest-path oracle over an app's reachable state space.
//!
//! The action set is [`canonical_actions`]: a tap on the center of every
//! enabled widget, `type_text` of every instruction token into every enabled
//! text field, `back`, and one gesture per declared swipe transition.

use alloc::collections::{BTreeMap, VecDeque};
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::hash::{Hash, Hasher};

use super::app::{AppGraph, Applied, Trigger};
use super::types::{Action, ScreenState, SwipeDirection, TaskSpec, WidgetKind};
use crate::geometry::Point;
use crate::text::vocabulary;

/// Upper bound on states visited by one search.
pub const SEARCH_STATE_CAP: usize = 500_000;

type StateKey = (String, BTreeMap<String, String>);

/// FNV-1a, used only to bucket state keys; buckets compare keys exactly.
struct Fnv(u64);

impl Hasher for Fnv {
    fn finish(&self) -> u64 {
        self.0
    }

    fn write(&mut self, bytes: &[u8]) {
        for b in bytes {
            self.0 = (self.0 ^ u64::from(*b)).wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
}

fn fingerprint(screen: &str, vars: &BTreeMap<String, String>) -> u64 {
    let mut h = Fnv(0xcbf2_9ce4_8422_2325);
    screen.hash(&mut h);
    vars.hash(&mut h);
    h.finish()
}

/// Exact state-key index bucketed by fingerprint.
#[derive(Debug, Clone, Default)]
struct StateIndex {
    buckets: BTreeMap<u64, Vec<usize>>,
}

impl StateIndex {
    fn find(&self, nodes: &[StateKey], screen: &str, vars: &BTreeMap<String, String>) -> Option<usize> {
        self.buckets
            .get(&fingerprint(screen, vars))?
            .iter()
            .copied()
            .find(|&i| nodes[i].0 == screen && &nodes[i].1 == vars)
    }

    fn insert(&mut self, key: &StateKey, idx: usize) {
        self.buckets.entry(fingerprint(&key.0, &key.1)).or_default().push(idx);
    }
}

fn swipe_gesture(dims: (u32, u32), dir: SwipeDirection) -> Action {
    let cx = (dims.0 / 2) as i32;
    let cy = (dims.1 / 2) as i32;
    let d = (dims.0.min(dims.1) / 3) as i32;
    let to = match dir {
        SwipeDirection::Up => Point::new(cx, cy - d),
        SwipeDirection::Down => Point::new(cx, cy + d),
        SwipeDirection::Left => Point::new(cx - d, cy),
        SwipeDirection::Right => Point::new(cx + d, cy),
    };
    Action::Swipe { from: Point::new(cx, cy), to }
}

pub fn canonical_actions(app: &AppGraph, state: &ScreenState, task: &TaskSpec) -> Vec<Action> {
    let vocab = vocabulary(&task.instruction);
    let mut out = Vec::new();
    for w in state.widgets.iter().filter(|w| w.enabled) {
        let c = w.bbox.center();
        out.push(Action::tap(c.x, c.y));
    }
    for w in state.widgets.iter().filter(|w| w.enabled && w.kind == WidgetKind::TextField) {
        for tok in &vocab {
            out.push(Action::type_text(&w.widget_id, tok));
        }
    }
    out.push(Action::Back);
    if let Some(spec) = app.screen(&state.screen_id) {
        for t in &spec.transitions {
            if let Trigger::Swipe(d) = t.on {
                out.push(swipe_gesture(state.screen_dims, d));
            }
        }
    }
    out
}

fn successors(app: &AppGraph, key: &StateKey, task: &TaskSpec) -> Vec<StateKey> {
    let state = app.render(&key.0, &key.1);
    canonical_actions(app, &state, task)
        .iter()
        .filter_map(|a| match app.apply(&key.0, &key.1, a) {
            Applied::Moved { screen, vars } => Some((screen, vars)),
            Applied::Invalid(_) => None,
        })
        .collect()
}

/// Minimal number of actions from `state` to any goal state, or `None` when
/// no goal state is reachable.
pub fn oracle_distance(app: &AppGraph, state: &ScreenState, task: &TaskSpec) -> Option<u32> {
    if state.app_id != app.app_id || app.screen(&state.screen_id).is_none() {
        return None;
    }
    let start: StateKey = (state.screen_id.clone(), state.var_bindings.clone());
    if task.goal.holds(&start.0, &start.1) {
        return Some(0);
    }
    let mut index = StateIndex::default();
    let mut nodes = vec![start];
    let mut depth = vec![0u32];
    index.insert(&nodes[0], 0);
    let mut i = 0;
    while i < nodes.len() {
        let d = depth[i];
        for next in successors(app, &nodes[i], task) {
            if index.find(&nodes, &next.0, &next.1).is_some() {
                continue;
            }
            if task.goal.holds(&next.0, &next.1) {
                return Some(d + 1);
            }
            if nodes.len() >= SEARCH_STATE_CAP {
                return None;
            }
            index.insert(&next, nodes.len());
            nodes.push(next);
            depth.push(d + 1);
        }
        i += 1;
    }
    None
}

/// Goal distances for every state reachable from a task's reset state
/// without passing through a goal state, computed once by reverse
/// breadth-first search.
#[derive(Debug, Clone)]
pub struct DistanceTable {
    app: Arc<AppGraph>,
    task: TaskSpec,
    nodes: Vec<StateKey>,
    index: StateIndex,
    dist: Vec<Option<u32>>,
}

impl DistanceTable {
    pub fn build(app: Arc<AppGraph>, task: &TaskSpec) -> Self {
        let root: StateKey = (app.start_screen.clone(), app.initial_vars(task.init_seed));
        let mut index = StateIndex::default();
        let mut nodes: Vec<StateKey> = Vec::new();
        let mut rev: Vec<Vec<usize>> = Vec::new();
        index.insert(&root, 0);
        nodes.push(root);
        rev.push(Vec::new());
        let mut i = 0;
        while i < nodes.len() && nodes.len() < SEARCH_STATE_CAP {
            // Goal states have distance 0 whatever follows them.
            if task.goal.holds(&nodes[i].0, &nodes[i].1) {
                i += 1;
                continue;
            }
            let succ = successors(&app, &nodes[i], task);
            for s in succ {
                let j = match index.find(&nodes, &s.0, &s.1) {
                    Some(j) => j,
                    None => {
                        let j = nodes.len();
                        index.insert(&s, j);
                        nodes.push(s);
                        rev.push(Vec::new());
                        j
                    }
                };
                rev[j].push(i);
            }
            i += 1;
        }
        let mut d: Vec<Option<u32>> = vec![None; nodes.len()];
        let mut queue = VecDeque::new();
        for (j, n) in nodes.iter().enumerate() {
            if task.goal.holds(&n.0, &n.1) {
                d[j] = Some(0);
                queue.push_back(j);
            }
        }
        while let Some(j) = queue.pop_front() {
            let dj = d[j].expect("queued nodes have a distance");
            for &p in &rev[j] {
                if d[p].is_none() {
                    d[p] = Some(dj + 1);
                    queue.push_back(p);
                }
            }
        }
        Self { app, task: task.clone(), nodes, index, dist: d }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn task(&self) -> &TaskSpec {
        &self.task
    }

    pub fn app(&self) -> &Arc<AppGraph> {
        &self.app
    }

    /// Table entry for `state`: `None` when the state is outside the table,
    /// `Some(None)` when it is in the table but cannot reach a goal.
    pub fn lookup(&self, state: &ScreenState) -> Option<Option<u32>> {
        if state.app_id != self.app.app_id {
            return None;
        }
        self.index.find(&self.nodes, &state.screen_id, &state.var_bindings).map(|i| self.dist[i])
    }

    /// Cached lookup; falls back to a fresh search for states outside the
    /// reset-reachable set.
    pub fn distance(&self, state: &ScreenState) -> Option<u32> {
        if state.app_id != self.app.app_id {
            return None;
        }
        match self.index.find(&self.nodes, &state.screen_id, &state.var_bindings) {
            Some(i) => self.dist[i],
            None => oracle_distance(&self.app, state, &self.task),
        }
    }
}
