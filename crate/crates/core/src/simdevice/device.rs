use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::sync::Arc;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};

use super::app::{AppGraph, AppRegistry, Applied};
use super::types::{Action, FaultPlan, ScreenState, TaskSpec};
use crate::digest::unit_f64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaultKind {
    Stall,
    Crash,
}

impl FaultKind {
    pub fn as_str(self) -> &'static str {
        match self {
            FaultKind::Stall => "stall",
            FaultKind::Crash => "crash",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DeviceError {
    #[error("unknown app {0}")]
    UnknownApp(String),
    #[error("environment faulted: {}", .0.as_str())]
    EnvFaulted(FaultKind),
    #[error("episode already terminal")]
    Terminal,
    #[error("device has not been reset")]
    NotReset,
}

/// Seeded per-step fault schedule.
///
/// Each step draws two uniforms from a ChaCha8 stream seeded with
/// `plan.rng_seed`: the first decides a crash, the second a stall. Both are
/// always drawn so the stream position only depends on the step count.
#[derive(Debug, Clone)]
pub struct FaultInjector {
    plan: FaultPlan,
    rng: ChaCha8Rng,
}

impl FaultInjector {
    pub fn new(plan: FaultPlan) -> Self {
        Self { plan, rng: ChaCha8Rng::seed_from_u64(plan.rng_seed) }
    }

    pub fn plan(&self) -> &FaultPlan {
        &self.plan
    }

    pub fn draw(&mut self) -> Option<FaultKind> {
        let crash = unit_f64(self.rng.next_u64());
        let stall = unit_f64(self.rng.next_u64());
        if crash < self.plan.crash_prob {
            Some(FaultKind::Crash)
        } else if stall < self.plan.stall_prob {
            Some(FaultKind::Stall)
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StepResult {
    pub observation: ScreenState,
    pub terminal: bool,
    /// Privileged goal check of the terminal state; `None` while running.
    pub outcome_hint: Option<u8>,
    /// Set when the action was invalid and the step was a self-loop.
    pub invalid: Option<&'static str>,
}

struct Episode {
    app: Arc<AppGraph>,
    task: TaskSpec,
    screen: String,
    vars: BTreeMap<String, String>,
    steps: u32,
    terminal: bool,
}

/// A single simulated phone. Not shared between threads; one lease owner
/// drives it at a time.
pub struct Device {
    registry: Arc<AppRegistry>,
    episode: Option<Episode>,
    faults: Option<FaultInjector>,
    fired: Option<FaultKind>,
    attempts: u64,
}

impl Device {
    pub fn new(registry: Arc<AppRegistry>) -> Self {
        Self { registry, episode: None, faults: None, fired: None, attempts: 0 }
    }

    pub fn registry(&self) -> &Arc<AppRegistry> {
        &self.registry
    }

    /// Start the task from its seeded initial state.
    pub fn reset(&mut self, task: &TaskSpec) -> Result<ScreenState, DeviceError> {
        if let Some(kind) = self.fired {
            return Err(DeviceError::EnvFaulted(kind));
        }
        let app = self
            .registry
            .get(&task.app_id)
            .cloned()
            .ok_or_else(|| DeviceError::UnknownApp(task.app_id.clone()))?;
        let vars = app.initial_vars(task.init_seed);
        let ep = Episode {
            screen: app.start_screen.clone(),
            app,
            task: task.clone(),
            vars,
            steps: 0,
            terminal: false,
        };
        let obs = ep.app.render(&ep.screen, &ep.vars);
        self.episode = Some(ep);
        Ok(obs)
    }

    pub fn step(&mut self, action: &Action) -> Result<StepResult, DeviceError> {
        if let Some(kind) = self.fired {
            return Err(DeviceError::EnvFaulted(kind));
        }
        let ep = self.episode.as_mut().ok_or(DeviceError::NotReset)?;
        if ep.terminal {
            return Err(DeviceError::Terminal);
        }
        self.attempts += 1;
        if let Some(kind) = self.faults.as_mut().and_then(FaultInjector::draw) {
            self.fired = Some(kind);
            return Err(DeviceError::EnvFaulted(kind));
        }
        let invalid = match ep.app.apply(&ep.screen, &ep.vars, action) {
            Applied::Moved { screen, vars } => {
                ep.screen = screen;
                ep.vars = vars;
                None
            }
            Applied::Invalid(why) => Some(why),
        };
        ep.steps += 1;
        ep.terminal = matches!(action, Action::Done { .. }) || ep.steps >= ep.task.max_steps;
        let observation = ep.app.render(&ep.screen, &ep.vars);
        let outcome_hint = ep.terminal.then(|| verify_outcome(&observation, &ep.task));
        Ok(StepResult { observation, terminal: ep.terminal, outcome_hint, invalid })
    }

    /// Replace the fault schedule. The stream restarts from `plan.rng_seed`.
    pub fn inject(&mut self, plan: FaultPlan) {
        self.faults = Some(FaultInjector::new(plan));
    }

    pub fn clear_faults(&mut self) {
        self.faults = None;
    }

    pub fn fault(&self) -> Option<FaultKind> {
        self.fired
    }

    /// Step attempts since construction, including the one that faulted.
    pub fn step_attempts(&self) -> u64 {
        self.attempts
    }

    pub fn observation(&self) -> Option<ScreenState> {
        self.episode.as_ref().map(|ep| ep.app.render(&ep.screen, &ep.vars))
    }

    pub fn steps(&self) -> u32 {
        self.episode.as_ref().map_or(0, |ep| ep.steps)
    }

    pub fn is_terminal(&self) -> bool {
        self.episode.as_ref().is_some_and(|ep| ep.terminal)
    }

    pub fn task(&self) -> Option<&TaskSpec> {
        self.episode.as_ref().map(|ep| &ep.task)
    }
}

/// 1 iff the task's goal predicate holds in `state`.
pub fn verify_outcome(state: &ScreenState, task: &TaskSpec) -> u8 {
    u8::from(state.app_id == task.app_id && task.goal.holds(&state.screen_id, &state.var_bindings))
}
