//! Linear-softmax toy policy over enumerated action candidates.
//!
//! Scores are `s_c = W[:, template(c)] . phi(obs, task, c)`, sampled from
//! `softmax(s / temperature)`. The feature map is fixed and versioned by
//! [`FEATURE_VERSION`]:
//!
//! | block            | width | meaning                                            |
//! |------------------|-------|----------------------------------------------------|
//! | bias             | 1     | always 1                                           |
//! | screen           | S     | one-hot of `app/screen` over the registry          |
//! | widget kind      | 5     | kind of the tapped or typed-into widget            |
//! | text overlap     | 2     | any / fraction of widget words found in instruction|
//! | toggle satisfied | 1     | toggle state word precedes its label in instruction|
//! | typing           | 4     | quoted token, label context, field has token, filled|
//! | template         | 5     | action template one-hot                            |

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::credit::AdvantageSet;
use crate::digest::{unit_f64, CanonicalWriter};
use crate::rollout::RolloutGroup;
use crate::simdevice::{Action, AppRegistry, DistanceTable, ScreenState, TaskSpec, Widget, WidgetKind};
use crate::text::{content_tokens, quoted_tokens, tokens, vocabulary};

pub const FEATURE_VERSION: &str = "linear-softmax-v1";
pub const TEMPLATES: usize = 5;
/// Learning rate for the linear policy, applied to the batch gradient
/// averaged over trajectories. Remote policies keep 1e-6.
pub const TOY_LEARNING_RATE: f64 = 0.3;
pub const REMOTE_LEARNING_RATE: f64 = 1e-6;
pub const DEFAULT_TEMPERATURE: f64 = 0.7;

const CONTEXT_WINDOW: usize = 2;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PolicyError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(&'static str),
    #[error("non-finite gradient entry at {0}")]
    NonFiniteGradient(usize),
    #[error("feature version {found} does not match {expected}")]
    VersionMismatch { expected: String, found: String },
}

/// Index layout of the feature vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureSpec {
    screens: Vec<String>,
}

impl FeatureSpec {
    pub fn new(registry: &AppRegistry) -> Self {
        Self { screens: registry.screen_keys() }
    }

    pub fn from_screens(mut screens: Vec<String>) -> Self {
        screens.sort();
        screens.dedup();
        Self { screens }
    }

    pub fn screens(&self) -> &[String] {
        &self.screens
    }

    fn screen_base(&self) -> usize {
        1
    }
    fn kind_base(&self) -> usize {
        1 + self.screens.len()
    }
    fn overlap_base(&self) -> usize {
        self.kind_base() + 5
    }
    fn toggle_idx(&self) -> usize {
        self.overlap_base() + 2
    }
    fn typing_base(&self) -> usize {
        self.toggle_idx() + 1
    }
    fn template_base(&self) -> usize {
        self.typing_base() + 4
    }

    pub fn dim(&self) -> usize {
        self.template_base() + TEMPLATES
    }

    fn screen_index(&self, obs: &ScreenState) -> Option<usize> {
        let mut key = String::with_capacity(obs.app_id.len() + obs.screen_id.len() + 1);
        key.push_str(&obs.app_id);
        key.push('/');
        key.push_str(&obs.screen_id);
        self.screens.binary_search(&key).ok()
    }
}

/// Instruction-derived token sets, computed once per decision.
struct InstructionView {
    raw: Vec<String>,
    content: Vec<String>,
    quoted: Vec<String>,
}

impl InstructionView {
    fn new(instruction: &str) -> Self {
        Self { raw: tokens(instruction), content: content_tokens(instruction), quoted: quoted_tokens(instruction) }
    }

    /// Some occurrence of `tok` is preceded, within the window, by a token in
    /// `context`.
    fn preceded_by(&self, tok: &str, context: &[String]) -> bool {
        self.raw.iter().enumerate().any(|(p, t)| {
            t == tok && self.raw[p.saturating_sub(CONTEXT_WINDOW)..p].iter().any(|c| context.contains(c))
        })
    }

    /// Some occurrence of a `label` token is preceded, within the window, by
    /// `word`.
    fn label_preceded_by(&self, label: &[String], word: &str) -> bool {
        self.raw.iter().enumerate().any(|(p, t)| {
            label.contains(t) && self.raw[p.saturating_sub(CONTEXT_WINDOW)..p].iter().any(|c| c == word)
        })
    }
}

/// Sparse feature vector: (index, value) pairs.
pub type Features = Vec<(usize, f64)>;

fn widget_features(spec: &FeatureSpec, view: &InstructionView, obs: &ScreenState, w: &Widget, out: &mut Features) {
    out.push((spec.kind_base() + w.kind.index(), 1.0));
    let words = content_tokens(&w.text);
    if !words.is_empty() {
        let hits = words.iter().filter(|t| view.content.contains(t)).count();
        if hits > 0 {
            out.push((spec.overlap_base(), 1.0));
            out.push((spec.overlap_base() + 1, hits as f64 / words.len() as f64));
        }
    }
    if w.kind == WidgetKind::Toggle {
        let state = obs.var(&w.widget_id).unwrap_or("off");
        if view.label_preceded_by(&words, state) {
            out.push((spec.toggle_idx(), 1.0));
        }
    }
}

fn candidate_features(
    spec: &FeatureSpec,
    view: &InstructionView,
    obs: &ScreenState,
    target: Option<&Widget>,
    action: &Action,
) -> Features {
    let mut f: Features = vec![(0, 1.0)];
    if let Some(s) = spec.screen_index(obs) {
        f.push((spec.screen_base() + s, 1.0));
    }
    if let Some(w) = target {
        widget_features(spec, view, obs, w, &mut f);
    }
    if let (Action::TypeText { widget_id, text }, Some(w)) = (action, target) {
        let base = spec.typing_base();
        if view.quoted.iter().any(|q| q == text) {
            f.push((base, 1.0));
        }
        if view.preceded_by(text, &content_tokens(&w.text)) {
            f.push((base + 1, 1.0));
        }
        let current = obs.var(widget_id).unwrap_or("");
        if current == text {
            f.push((base + 2, 1.0));
        }
        if !current.is_empty() {
            f.push((base + 3, 1.0));
        }
    }
    f.push((spec.template_base() + action.template(), 1.0));
    f
}

/// Action candidates for a screen, in a fixed order: taps on enabled widget
/// centers, `type_text` of each instruction token into each enabled text
/// field, `back`, `done`.
pub fn enumerate_candidates(obs: &ScreenState, task: &TaskSpec) -> Vec<Action> {
    candidates_with_targets(obs, task).into_iter().map(|(a, _)| a).collect()
}

fn candidates_with_targets<'a>(obs: &'a ScreenState, task: &TaskSpec) -> Vec<(Action, Option<&'a Widget>)> {
    let mut out = Vec::new();
    for w in obs.widgets.iter().filter(|w| w.enabled) {
        let c = w.bbox.center();
        out.push((Action::tap(c.x, c.y), Some(w)));
    }
    let vocab = vocabulary(&task.instruction);
    for w in obs.widgets.iter().filter(|w| w.enabled && w.kind == WidgetKind::TextField) {
        for tok in &vocab {
            out.push((Action::type_text(&w.widget_id, tok), Some(w)));
        }
    }
    out.push((Action::Back, None));
    out.push((Action::done(), None));
    out
}

/// Candidates paired with their feature vectors.
pub fn featurize(spec: &FeatureSpec, obs: &ScreenState, task: &TaskSpec) -> Vec<(Action, Features)> {
    let view = InstructionView::new(&task.instruction);
    candidates_with_targets(obs, task)
        .into_iter()
        .map(|(a, w)| {
            let f = candidate_features(spec, &view, obs, w, &a);
            (a, f)
        })
        .collect()
}

/// Weight matrix `W` of shape `dim x TEMPLATES`, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyParams {
    pub version: String,
    pub rows: usize,
    pub weights: Vec<f64>,
}

impl PolicyParams {
    pub fn zeros(spec: &FeatureSpec) -> Self {
        Self { version: FEATURE_VERSION.to_string(), rows: spec.dim(), weights: vec![0.0; spec.dim() * TEMPLATES] }
    }

    /// Uniform entries in `[-scale, scale]` from a seeded stream.
    pub fn random(spec: &FeatureSpec, scale: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = Self::zeros(spec);
        for w in &mut p.weights {
            *w = (2.0 * unit_f64(rng.next_u64()) - 1.0) * scale;
        }
        p
    }

    pub fn get(&self, row: usize, template: usize) -> f64 {
        self.weights[row * TEMPLATES + template]
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(|w| w.is_finite())
    }

    fn check(&self, spec: &FeatureSpec) -> Result<(), PolicyError> {
        if self.version != FEATURE_VERSION {
            return Err(PolicyError::VersionMismatch { expected: FEATURE_VERSION.into(), found: self.version.clone() });
        }
        if self.rows != spec.dim() || self.weights.len() != self.rows * TEMPLATES {
            return Err(PolicyError::ShapeMismatch("parameter rows do not match the feature spec"));
        }
        Ok(())
    }

    pub fn score(&self, features: &Features, template: usize) -> f64 {
        features.iter().map(|&(i, v)| self.weights[i * TEMPLATES + template] * v).sum()
    }
}

/// Softmax of `scores / temperature`, max-shifted.
pub fn softmax(scores: &[f64], temperature: f64) -> Vec<f64> {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| libm::exp((s - max) / temperature)).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}

fn log_softmax_at(scores: &[f64], temperature: f64, idx: usize) -> f64 {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = scores.iter().map(|s| libm::exp((s - max) / temperature)).sum();
    (scores[idx] - max) / temperature - libm::log(z)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    pub action: Action,
    pub logprob: f64,
    pub candidate_index: u32,
    pub candidate_count: u32,
}

pub fn candidate_scores(params: &PolicyParams, featurized: &[(Action, Features)]) -> Vec<f64> {
    featurized.iter().map(|(a, f)| params.score(f, a.template())).collect()
}

/// Sample an action from `softmax(scores / temperature)`.
pub fn act(
    params: &PolicyParams,
    spec: &FeatureSpec,
    obs: &ScreenState,
    task: &TaskSpec,
    temperature: f64,
    rng: &mut dyn RngCore,
) -> Decision {
    let cands = featurize(spec, obs, task);
    let scores = candidate_scores(params, &cands);
    let probs = softmax(&scores, temperature);
    let u = unit_f64(rng.next_u64());
    let mut idx = probs.len() - 1;
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            idx = i;
            break;
        }
    }
    Decision {
        logprob: log_softmax_at(&scores, temperature, idx),
        action: cands[idx].0.clone(),
        candidate_index: idx as u32,
        candidate_count: cands.len() as u32,
    }
}

/// Zero-temperature limit: the first highest-scoring candidate.
pub fn act_greedy(params: &PolicyParams, spec: &FeatureSpec, obs: &ScreenState, task: &TaskSpec) -> Decision {
    let cands = featurize(spec, obs, task);
    let scores = candidate_scores(params, &cands);
    let mut idx = 0;
    for (i, s) in scores.iter().enumerate() {
        if *s > scores[idx] {
            idx = i;
        }
    }
    Decision {
        action: cands[idx].0.clone(),
        logprob: 0.0,
        candidate_index: idx as u32,
        candidate_count: cands.len() as u32,
    }
}

/// Something that picks actions. Implementations must be deterministic given
/// the RNG stream.
pub trait Policy: Send + Sync {
    fn decide(&self, obs: &ScreenState, task: &TaskSpec, rng: &mut dyn RngCore) -> Decision;
}

#[derive(Debug, Clone)]
pub struct LinearSoftmaxPolicy {
    pub spec: Arc<FeatureSpec>,
    pub params: PolicyParams,
    pub temperature: f64,
    pub greedy: bool,
}

impl Policy for LinearSoftmaxPolicy {
    fn decide(&self, obs: &ScreenState, task: &TaskSpec, rng: &mut dyn RngCore) -> Decision {
        if self.greedy {
            act_greedy(&self.params, &self.spec, obs, task)
        } else {
            act(&self.params, &self.spec, obs, task, self.temperature, rng)
        }
    }
}

/// Follows a shortest path to the goal using precomputed distance tables,
/// then emits `done`. Uniform over candidates for unknown tasks.
#[derive(Debug, Clone, Default)]
pub struct OracleGreedyPolicy {
    tables: BTreeMap<String, Arc<DistanceTable>>,
}

impl OracleGreedyPolicy {
    pub fn new(tables: impl IntoIterator<Item = Arc<DistanceTable>>) -> Self {
        Self { tables: tables.into_iter().map(|t| (t.task().task_id.clone(), t)).collect() }
    }
}

impl Policy for OracleGreedyPolicy {
    fn decide(&self, obs: &ScreenState, task: &TaskSpec, rng: &mut dyn RngCore) -> Decision {
        let cands = enumerate_candidates(obs, task);
        let count = cands.len() as u32;
        let pick = |idx: usize| Decision {
            action: cands[idx].clone(),
            logprob: 0.0,
            candidate_index: idx as u32,
            candidate_count: count,
        };
        let Some(table) = self.tables.get(&task.task_id) else {
            return pick((rng.next_u64() % u64::from(count)) as usize);
        };
        let done_idx = cands.len() - 1;
        let Some(d) = table.distance(obs) else {
            return pick(done_idx);
        };
        if d == 0 {
            return pick(done_idx);
        }
        let app = table.app();
        for (i, a) in cands.iter().enumerate() {
            if let Some(next) = app.preview(obs, a) {
                if table.distance(&next) == Some(d - 1) {
                    return pick(i);
                }
            }
        }
        pick(done_idx)
    }
}

/// Uniform random choice over candidates.
#[derive(Debug, Clone, Copy, Default)]
pub struct UniformPolicy;

impl Policy for UniformPolicy {
    fn decide(&self, obs: &ScreenState, task: &TaskSpec, rng: &mut dyn RngCore) -> Decision {
        let cands = enumerate_candidates(obs, task);
        let n = cands.len();
        let idx = (rng.next_u64() % n as u64) as usize;
        Decision {
            action: cands[idx].clone(),
            logprob: -libm::log(n as f64),
            candidate_index: idx as u32,
            candidate_count: n as u32,
        }
    }
}

/// Gradient of `sum_{i,t} adv(i,t) * log pi(a_it | s_it)` with respect to `W`,
/// plus a digest of the advantages it consumed, in order.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub values: Vec<f64>,
    pub consumed_digest: [u8; 32],
}

/// Closed form for linear-softmax:
/// `d log pi(a) / dW = (phi_a e_a^T - sum_c pi_c phi_c e_c^T) / temperature`.
pub fn policy_gradient(
    params: &PolicyParams,
    spec: &FeatureSpec,
    task: &TaskSpec,
    group: &RolloutGroup,
    advantages: &AdvantageSet,
    temperature: f64,
) -> Result<Gradient, PolicyError> {
    params.check(spec)?;
    if !advantages.aligned_with(group) {
        return Err(PolicyError::ShapeMismatch("advantages are not aligned with the group"));
    }
    let mut grad = vec![0.0; params.weights.len()];
    let mut digest = CanonicalWriter::new();
    for (traj, adv) in group.trajectories.iter().zip(&advantages.trajectories) {
        digest.u64(adv.combined_adv.len() as u64);
        for (step, &a) in traj.steps.iter().zip(&adv.combined_adv) {
            digest.f64(a);
            let obs = step.observation.as_ref().ok_or(PolicyError::ShapeMismatch("step lacks its observation"))?;
            let cands = featurize(spec, obs, task);
            if cands.len() != step.candidate_count as usize || step.candidate_index as usize >= cands.len() {
                return Err(PolicyError::ShapeMismatch("candidate set differs from the recorded decision"));
            }
            if a == 0.0 {
                continue;
            }
            let scores = candidate_scores(params, &cands);
            let probs = softmax(&scores, temperature);
            let scale = a / temperature;
            let (chosen_action, chosen) = &cands[step.candidate_index as usize];
            for &(i, v) in chosen {
                grad[i * TEMPLATES + chosen_action.template()] += scale * v;
            }
            for ((act, f), p) in cands.iter().zip(&probs) {
                let k = act.template();
                for &(i, v) in f {
                    grad[i * TEMPLATES + k] -= scale * p * v;
                }
            }
        }
    }
    Ok(Gradient { values: grad, consumed_digest: digest.finish() })
}

/// Ascent step `W + lr * grad`.
pub fn update(params: &PolicyParams, grad: &[f64], learning_rate: f64) -> Result<PolicyParams, PolicyError> {
    if grad.len() != params.weights.len() {
        return Err(PolicyError::ShapeMismatch("gradient length differs from parameters"));
    }
    if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
        return Err(PolicyError::NonFiniteGradient(i));
    }
    let mut next = params.clone();
    for (w, g) in next.weights.iter_mut().zip(grad) {
        *w += learning_rate * g;
    }
    Ok(next)
}
