use alloc::string::String;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::simdevice::{Action, AnchorKey, ScreenState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Done,
    StepBudget,
    /// The episode was restarted on a rotated environment at least once.
    RotatedRestart,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub anchor: AnchorKey,
    pub action: Action,
    pub logprob: f64,
    /// Composed per-step reward.
    pub reward: f64,
    pub candidate_count: u32,
    /// Index of `action` in the candidate list the policy scored.
    pub candidate_index: u32,
    /// Observation the decision was made on; needed to recompute features
    /// for the gradient, not logged.
    #[serde(skip)]
    pub observation: Option<ScreenState>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub task_id: String,
    pub rollout_id: String,
    pub steps: Vec<StepRecord>,
    pub outcome: u8,
    pub termination: Termination,
}

impl Trajectory {
    pub fn rewards(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.reward).collect()
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GroupError {
    #[error("trajectory {rollout} belongs to task {found}, group task is {expected}")]
    MixedTasks { expected: String, found: String, rollout: String },
}

/// Trajectories sampled for the same task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutGroup {
    pub task_id: String,
    pub trajectories: Vec<Trajectory>,
}

impl RolloutGroup {
    pub fn new(task_id: impl Into<String>, trajectories: Vec<Trajectory>) -> Result<Self, GroupError> {
        let task_id = task_id.into();
        if let Some(t) = trajectories.iter().find(|t| t.task_id != task_id) {
            return Err(GroupError::MixedTasks {
                expected: task_id,
                found: t.task_id.clone(),
                rollout: t.rollout_id.clone(),
            });
        }
        Ok(Self { task_id, trajectories })
    }

    pub fn size(&self) -> usize {
        self.trajectories.len()
    }

    pub fn total_steps(&self) -> usize {
        self.trajectories.iter().map(Trajectory::len).sum()
    }
}
