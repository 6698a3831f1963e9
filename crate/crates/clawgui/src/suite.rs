//! Task suites: app graphs plus tasks, the shipped 20-task suite, and the
//! builder that fills in difficulty and reference solutions.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use clawgui_core::simdevice::{
    canonical_actions, Action, AppError, AppGraph, AppRegistry, DistanceTable, TaskSpec,
};

const BUILTIN_APPS: &[(&str, &str)] = &[
    ("clock", include_str!("../data/apps/clock.json")),
    ("mail", include_str!("../data/apps/mail.json")),
    ("notes", include_str!("../data/apps/notes.json")),
    ("settings", include_str!("../data/apps/settings.json")),
    ("shop", include_str!("../data/apps/shop.json")),
];
const BUILTIN_SUITE: &str = include_str!("../data/suite.json");

#[derive(Debug, thiserror::Error)]
pub enum SuiteError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{what}: {source}")]
    Json { what: String, source: serde_json::Error },
    #[error(transparent)]
    App(#[from] AppError),
    #[error("task {task} references unknown app {app}")]
    UnknownApp { task: String, app: String },
    #[error("duplicate task id {0}")]
    DuplicateTask(String),
    #[error("task {0} has no reachable goal")]
    Unsolvable(String),
    #[error("suite is empty")]
    EmptySuite,
}

#[derive(Debug, Clone)]
pub struct Suite {
    pub registry: Arc<AppRegistry>,
    pub tasks: Vec<TaskSpec>,
}

fn parse_json<T: serde::de::DeserializeOwned>(what: &str, text: &str) -> Result<T, SuiteError> {
    serde_json::from_str(text).map_err(|source| SuiteError::Json { what: what.to_string(), source })
}

fn read(path: &Path) -> Result<String, SuiteError> {
    fs::read_to_string(path).map_err(|source| SuiteError::Io { path: path.display().to_string(), source })
}

impl Suite {
    pub fn new(registry: Arc<AppRegistry>, tasks: Vec<TaskSpec>) -> Result<Self, SuiteError> {
        let mut ids = BTreeSet::new();
        for t in &tasks {
            if !ids.insert(t.task_id.as_str()) {
                return Err(SuiteError::DuplicateTask(t.task_id.clone()));
            }
            if registry.get(&t.app_id).is_none() {
                return Err(SuiteError::UnknownApp { task: t.task_id.clone(), app: t.app_id.clone() });
            }
        }
        Ok(Self { registry, tasks })
    }

    /// The shipped apps only, without tasks.
    pub fn builtin_registry() -> Arc<AppRegistry> {
        let apps = BUILTIN_APPS
            .iter()
            .map(|(name, text)| parse_json::<AppGraph>(name, text).expect("shipped apps parse"));
        Arc::new(AppRegistry::from_apps(apps).expect("shipped apps validate"))
    }

    /// The shipped 20-task suite.
    pub fn builtin() -> Self {
        let tasks: Vec<TaskSpec> = parse_json("suite.json", BUILTIN_SUITE).expect("shipped suite parses");
        Self::new(Self::builtin_registry(), tasks).expect("shipped suite is consistent")
    }

    /// Load `<dir>/apps/*.json` and `<dir>/suite.json`.
    pub fn load_dir(dir: &Path) -> Result<Self, SuiteError> {
        let apps_dir = dir.join("apps");
        let entries = fs::read_dir(&apps_dir)
            .map_err(|source| SuiteError::Io { path: apps_dir.display().to_string(), source })?;
        let mut paths: Vec<_> = entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        paths.sort();
        let mut apps = Vec::new();
        for p in paths {
            apps.push(parse_json::<AppGraph>(&p.display().to_string(), &read(&p)?)?);
        }
        let registry = Arc::new(AppRegistry::from_apps(apps)?);
        let suite_path = dir.join("suite.json");
        let tasks = parse_json(&suite_path.display().to_string(), &read(&suite_path)?)?;
        Self::new(registry, tasks)
    }

    pub fn task(&self, task_id: &str) -> Option<&TaskSpec> {
        self.tasks.iter().find(|t| t.task_id == task_id)
    }

    pub fn filter(&self, keep: impl Fn(&TaskSpec) -> bool) -> Self {
        Self { registry: self.registry.clone(), tasks: self.tasks.iter().filter(|t| keep(t)).cloned().collect() }
    }

    /// Tasks whose apps offer goal routes of different lengths.
    pub fn variable_length(&self) -> Self {
        self.filter(|t| t.variable_length)
    }

    pub fn distance_table(&self, task: &TaskSpec) -> DistanceTable {
        let app = self.registry.get(&task.app_id).expect("checked at construction").clone();
        DistanceTable::build(app, task)
    }

    pub fn distance_tables(&self) -> Vec<Arc<DistanceTable>> {
        self.tasks.iter().map(|t| Arc::new(self.distance_table(t))).collect()
    }
}

/// Shortest action sequence from reset to the goal, followed by `done`.
pub fn solve(table: &DistanceTable) -> Option<Vec<Action>> {
    let app = table.app().clone();
    let task = table.task();
    let mut state = app.render(&app.start_screen, &app.initial_vars(task.init_seed));
    let mut d = table.distance(&state)?;
    let mut plan = Vec::with_capacity(d as usize + 1);
    while d > 0 {
        let (action, next) = canonical_actions(&app, &state, task)
            .into_iter()
            .find_map(|a| {
                let next = app.preview(&state, &a)?;
                (table.distance(&next) == Some(d - 1)).then_some((a, next))
            })?;
        plan.push(action);
        state = next;
        d -= 1;
    }
    plan.push(Action::done());
    Some(plan)
}

/// Fill `difficulty` and `reference_solution` for every task.
pub fn annotate(registry: &Arc<AppRegistry>, tasks: &[TaskSpec]) -> Result<Vec<TaskSpec>, SuiteError> {
    let suite = Suite::new(registry.clone(), tasks.to_vec())?;
    let mut out = Vec::with_capacity(tasks.len());
    for t in &suite.tasks {
        let table = suite.distance_table(t);
        let plan = solve(&table).ok_or_else(|| SuiteError::Unsolvable(t.task_id.clone()))?;
        let mut t = t.clone();
        t.difficulty = Some(plan.len() as u32 - 1);
        t.reference_solution = plan;
        out.push(t);
    }
    Ok(out)
}
