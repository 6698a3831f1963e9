//! Group-relative advantage estimation.
//!
//! * GRPO: every step of trajectory `i` gets `(R_i - mean(R)) / std(R)`,
//!   normalized over the group's episode returns.
//! * GiGPO: the same episode-level term, plus a step-level term. Steps whose
//!   observation has the same anchor key form a bucket across the group; the
//!   discounted return from each step is normalized within its bucket.
//!   `combined = episode + omega * step`.
//!
//! Standard deviations are population estimates. A group or bucket whose
//! standard deviation falls below `std_floor` yields zero advantages.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::digest::CanonicalWriter;
use crate::rollout::RolloutGroup;
use crate::simdevice::AnchorKey;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CreditConfig {
    pub gamma: f64,
    pub omega: f64,
    pub std_floor: f64,
}

impl Default for CreditConfig {
    fn default() -> Self {
        Self { gamma: 0.95, omega: 1.0, std_floor: 1e-8 }
    }
}

impl CreditConfig {
    pub fn validate(&self) -> Result<(), CreditError> {
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(CreditError::Config("gamma must lie in (0, 1]"));
        }
        if !(self.omega.is_finite() && self.omega >= 0.0) {
            return Err(CreditError::Config("omega must be finite and non-negative"));
        }
        if !(self.std_floor.is_finite() && self.std_floor > 0.0) {
            return Err(CreditError::Config("std_floor must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CreditError {
    #[error("group of {0} trajectories; normalization needs at least 2")]
    GroupTooSmall(usize),
    #[error("invalid credit config: {0}")]
    Config(&'static str),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryAdvantage {
    pub episode_adv: f64,
    pub step_adv: Vec<f64>,
    pub combined_adv: Vec<f64>,
}

/// Advantages aligned with a group's trajectories and their steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdvantageSet {
    pub trajectories: Vec<TrajectoryAdvantage>,
}

impl AdvantageSet {
    /// Digest of every combined advantage, in order, by bit pattern.
    pub fn combined_digest(&self) -> [u8; 32] {
        let mut w = CanonicalWriter::new();
        for t in &self.trajectories {
            w.u64(t.combined_adv.len() as u64);
            for &a in &t.combined_adv {
                w.f64(a);
            }
        }
        w.finish()
    }

    pub fn aligned_with(&self, group: &RolloutGroup) -> bool {
        self.trajectories.len() == group.trajectories.len()
            && self
                .trajectories
                .iter()
                .zip(&group.trajectories)
                .all(|(a, t)| a.combined_adv.len() == t.steps.len() && a.step_adv.len() == t.steps.len())
    }
}

/// Which advantage estimator the trainer runs.
///
/// Other group-based estimators (Reinforce++, PPO with a critic, GSPO) would
/// slot in as further variants behind [`AdvantageEstimator`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    Grpo,
    Gigpo,
}

pub trait AdvantageEstimator {
    fn estimate(&self, group: &RolloutGroup, config: &CreditConfig) -> Result<AdvantageSet, CreditError>;
}

impl AdvantageEstimator for Estimator {
    fn estimate(&self, group: &RolloutGroup, config: &CreditConfig) -> Result<AdvantageSet, CreditError> {
        match self {
            Estimator::Grpo => grpo_advantages(group, config),
            Estimator::Gigpo => gigpo_advantages(group, config),
        }
    }
}

pub fn episode_returns(group: &RolloutGroup) -> Vec<f64> {
    group.trajectories.iter().map(|t| t.steps.iter().map(|s| s.reward).sum()).collect()
}

/// `G_t = sum_k gamma^k r_{t+k}`, computed backwards.
pub fn discounted_returns(rewards: &[f64], gamma: f64) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    let mut acc = 0.0;
    for (t, &r) in rewards.iter().enumerate().rev() {
        acc = r + gamma * acc;
        out[t] = acc;
    }
    out
}

/// Steps bucketed by the anchor key of the observation they acted on.
pub fn anchor_groups(group: &RolloutGroup) -> BTreeMap<AnchorKey, Vec<(usize, usize)>> {
    let mut buckets: BTreeMap<AnchorKey, Vec<(usize, usize)>> = BTreeMap::new();
    for (i, traj) in group.trajectories.iter().enumerate() {
        for (t, step) in traj.steps.iter().enumerate() {
            buckets.entry(step.anchor).or_default().push((i, t));
        }
    }
    buckets
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, libm::sqrt(var))
}

fn normalize(xs: &[f64], floor: f64) -> Vec<f64> {
    let (mean, std) = mean_std(xs);
    if std < floor {
        return vec![0.0; xs.len()];
    }
    xs.iter().map(|x| (x - mean) / std).collect()
}

fn episode_level(group: &RolloutGroup, config: &CreditConfig) -> Result<Vec<f64>, CreditError> {
    config.validate()?;
    if group.size() < 2 {
        return Err(CreditError::GroupTooSmall(group.size()));
    }
    Ok(normalize(&episode_returns(group), config.std_floor))
}

pub fn grpo_advantages(group: &RolloutGroup, config: &CreditConfig) -> Result<AdvantageSet, CreditError> {
    let episode = episode_level(group, config)?;
    let trajectories = group
        .trajectories
        .iter()
        .zip(episode)
        .map(|(traj, a)| TrajectoryAdvantage {
            episode_adv: a,
            step_adv: vec![0.0; traj.steps.len()],
            combined_adv: vec![a; traj.steps.len()],
        })
        .collect();
    Ok(AdvantageSet { trajectories })
}

/// With `omega == 0` the step level is disabled and the result is exactly
/// [`grpo_advantages`].
pub fn gigpo_advantages(group: &RolloutGroup, config: &CreditConfig) -> Result<AdvantageSet, CreditError> {
    if config.omega == 0.0 {
        return grpo_advantages(group, config);
    }
    let episode = episode_level(group, config)?;
    let returns: Vec<Vec<f64>> =
        group.trajectories.iter().map(|t| discounted_returns(&t.rewards(), config.gamma)).collect();
    let mut step_adv: Vec<Vec<f64>> = group.trajectories.iter().map(|t| vec![0.0; t.steps.len()]).collect();
    for members in anchor_groups(group).values() {
        if members.len() < 2 {
            continue;
        }
        let values: Vec<f64> = members.iter().map(|&(i, t)| returns[i][t]).collect();
        for (&(i, t), a) in members.iter().zip(normalize(&values, config.std_floor)) {
            step_adv[i][t] = a;
        }
    }
    let trajectories = episode
        .into_iter()
        .zip(step_adv)
        .map(|(e, steps)| TrajectoryAdvantage {
            episode_adv: e,
            combined_adv: steps.iter().map(|s| e + config.omega * s).collect(),
            step_adv: steps,
        })
        .collect();
    Ok(AdvantageSet { trajectories })
}
