//! Reward construction: binary outcome reward, dense step scores, and their
//! per-step composition.
//!
//! Placement rule: step `t` receives `lambda_step * step_scores[t]`, and the
//! final step additionally receives the outcome. Summed over an episode this
//! is `outcome + lambda_step * sum(step_scores)`.

use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::digest::CanonicalWriter;
use crate::simdevice::{canonical_bytes, verify_outcome, Action, DistanceTable, ScreenState, TaskSpec};

/// Small enough that the rule PRM cannot outweigh the outcome: a policy that
/// oscillates away from and back towards the goal earns at most
/// `lambda * max_steps / 2 = 0.25` over a 50-step episode.
pub const DEFAULT_LAMBDA_STEP: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RewardError {
    #[error("{scores} step scores for a trajectory of {steps} steps")]
    LengthMismatch { scores: usize, steps: usize },
    #[error("outcome must be 0 or 1, got {0}")]
    BadOutcome(u8),
    #[error("step score {0} outside [0, 1]")]
    BadScore(f64),
    #[error("lambda_step must be finite and non-negative, got {0}")]
    BadLambda(f64),
    #[error("judge unavailable: {0}")]
    JudgeUnavailable(String),
    #[error("step judging needs at least one action in the history")]
    EmptyHistory,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardSignal {
    outcome: u8,
    step_scores: Vec<f64>,
    lambda_step: f64,
}

impl RewardSignal {
    pub fn new(outcome: u8, step_scores: Vec<f64>, lambda_step: f64) -> Result<Self, RewardError> {
        if outcome > 1 {
            return Err(RewardError::BadOutcome(outcome));
        }
        if !(lambda_step.is_finite() && lambda_step >= 0.0) {
            return Err(RewardError::BadLambda(lambda_step));
        }
        if let Some(&s) = step_scores.iter().find(|s| !(0.0..=1.0).contains(*s)) {
            return Err(RewardError::BadScore(s));
        }
        Ok(Self { outcome, step_scores, lambda_step })
    }

    pub fn outcome(&self) -> u8 {
        self.outcome
    }

    pub fn step_scores(&self) -> &[f64] {
        &self.step_scores
    }

    pub fn lambda_step(&self) -> f64 {
        self.lambda_step
    }

    /// Episode-level reward `outcome + lambda_step * sum(step_scores)`.
    pub fn aggregate(&self) -> f64 {
        f64::from(self.outcome) + self.lambda_step * self.step_scores.iter().sum::<f64>()
    }
}

/// Per-step rewards `r_1..r_T` for a trajectory of `steps` steps.
pub fn compose(signal: &RewardSignal, steps: usize) -> Result<Vec<f64>, RewardError> {
    if steps == 0 || signal.step_scores.len() != steps {
        return Err(RewardError::LengthMismatch { scores: signal.step_scores.len(), steps });
    }
    let mut out: Vec<f64> = signal.step_scores.iter().map(|s| signal.lambda_step * s).collect();
    out[steps - 1] += f64::from(signal.outcome);
    Ok(out)
}

/// What the judge sees of a screen: a structured state in training, an
/// opaque image reference in evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ObservationRef {
    Screen { state: ScreenState },
    Image { reference: String },
}

impl ObservationRef {
    pub fn screen(&self) -> Option<&ScreenState> {
        match self {
            ObservationRef::Screen { state } => Some(state),
            ObservationRef::Image { .. } => None,
        }
    }

    fn write(&self, w: &mut CanonicalWriter) {
        match self {
            ObservationRef::Screen { state } => {
                w.u64(0).bytes(&canonical_bytes(state));
            }
            ObservationRef::Image { reference } => {
                w.u64(1).str(reference);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgeRequest {
    pub instruction: String,
    pub prev_obs: Option<ObservationRef>,
    pub cur_obs: ObservationRef,
    pub action_history: Vec<Action>,
}

pub(crate) fn write_action(w: &mut CanonicalWriter, a: &Action) {
    w.u64(a.template() as u64);
    match a {
        Action::Tap { point } => {
            w.i64(point.x.into()).i64(point.y.into());
        }
        Action::Swipe { from, to } => {
            w.i64(from.x.into()).i64(from.y.into()).i64(to.x.into()).i64(to.y.into());
        }
        Action::TypeText { widget_id, text } => {
            w.str(widget_id).str(text);
        }
        Action::Back => {}
        Action::Done { answer } => {
            w.str(answer.as_deref().unwrap_or(""));
        }
    }
}

impl JudgeRequest {
    /// SHA-256 over a canonical encoding of the request.
    pub fn digest(&self) -> [u8; 32] {
        let mut w = CanonicalWriter::new();
        w.str(&self.instruction);
        match &self.prev_obs {
            Some(o) => {
                w.u64(1);
                o.write(&mut w);
            }
            None => {
                w.u64(0);
            }
        }
        self.cur_obs.write(&mut w);
        w.u64(self.action_history.len() as u64);
        for a in &self.action_history {
            write_action(&mut w, a);
        }
        w.finish()
    }
}

/// MLLM-as-judge verdict on a final screen.
pub trait OutcomeJudge: Send + Sync {
    fn judge_outcome(&self, req: &JudgeRequest) -> Result<bool, RewardError>;
}

/// Process-reward judge scoring one step.
pub trait StepJudge: Send + Sync {
    fn judge_step(&self, req: &JudgeRequest) -> Result<f64, RewardError>;
}

/// Goal distance for a state; `None` means unreachable.
pub trait DistanceOracle {
    fn distance(&self, state: &ScreenState) -> Option<u32>;
}

impl DistanceOracle for DistanceTable {
    fn distance(&self, state: &ScreenState) -> Option<u32> {
        DistanceTable::distance(self, state)
    }
}

#[derive(Clone, Copy)]
pub enum OutcomeMode<'a> {
    /// Privileged inspection of app state.
    System,
    Judge(&'a dyn OutcomeJudge),
}

#[derive(Clone, Copy)]
pub enum PrmMode<'a> {
    /// 1 when the oracle distance strictly decreased.
    Rule(&'a dyn DistanceOracle),
    Remote(&'a dyn StepJudge),
}

pub fn outcome_reward(
    final_state: &ScreenState,
    task: &TaskSpec,
    history: &[Action],
    mode: OutcomeMode<'_>,
) -> Result<u8, RewardError> {
    match mode {
        OutcomeMode::System => Ok(verify_outcome(final_state, task)),
        OutcomeMode::Judge(judge) => {
            let req = JudgeRequest {
                instruction: task.instruction.clone(),
                prev_obs: None,
                cur_obs: ObservationRef::Screen { state: final_state.clone() },
                action_history: history.to_vec(),
            };
            judge.judge_outcome(&req).map(u8::from)
        }
    }
}

/// Step score in [0, 1], or the judge error for the caller to log.
pub fn try_prm_step_score(req: &JudgeRequest, mode: PrmMode<'_>) -> Result<f64, RewardError> {
    if req.action_history.is_empty() {
        return Err(RewardError::EmptyHistory);
    }
    match mode {
        PrmMode::Rule(oracle) => {
            let (Some(prev), Some(cur)) = (req.prev_obs.as_ref().and_then(ObservationRef::screen), req.cur_obs.screen())
            else {
                return Ok(0.0);
            };
            let closer = match (oracle.distance(prev), oracle.distance(cur)) {
                (Some(p), Some(c)) => c < p,
                (None, Some(_)) => true,
                _ => false,
            };
            Ok(if closer { 1.0 } else { 0.0 })
        }
        PrmMode::Remote(judge) => {
            let s = judge.judge_step(req)?;
            Ok(if s.is_nan() { 0.0 } else { s.clamp(0.0, 1.0) })
        }
    }
}

/// Step score with judge failures degraded to 0.
pub fn prm_step_score(req: &JudgeRequest, mode: PrmMode<'_>) -> f64 {
    try_prm_step_score(req, mode).unwrap_or(0.0)
}

type Script = Box<dyn Fn(&[u8; 32]) -> Option<f64> + Send + Sync>;

/// Deterministic judge whose answer is a scripted function of the request
/// digest. `None` from the script means "unavailable"; outcome verdicts are
/// `score >= 0.5`.
pub struct MockJudge {
    script: Script,
}

impl MockJudge {
    pub fn scripted(f: impl Fn(&[u8; 32]) -> Option<f64> + Send + Sync + 'static) -> Self {
        Self { script: Box::new(f) }
    }

    pub fn always(success: bool) -> Self {
        Self::scripted(move |_| Some(if success { 1.0 } else { 0.0 }))
    }

    pub fn constant(score: f64) -> Self {
        Self::scripted(move |_| Some(score))
    }

    pub fn unavailable() -> Self {
        Self::scripted(|_| None)
    }

    fn eval(&self, req: &JudgeRequest) -> Result<f64, RewardError> {
        (self.script)(&req.digest()).ok_or_else(|| RewardError::JudgeUnavailable("mock judge scripted outage".into()))
    }
}

impl OutcomeJudge for MockJudge {
    fn judge_outcome(&self, req: &JudgeRequest) -> Result<bool, RewardError> {
        self.eval(req).map(|s| s >= 0.5)
    }
}

impl StepJudge for MockJudge {
    fn judge_step(&self, req: &JudgeRequest) -> Result<f64, RewardError> {
        self.eval(req)
    }
}
