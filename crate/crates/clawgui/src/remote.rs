//! Endpoint-backed policy and judges.
//!
//! Observations travel as JSON text. The policy expects a JSON action in
//! its reply; anything else becomes the no-op action. Judges answer
//! `yes`/`no` for outcomes and a number in [0, 1] for steps.

use clawgui_core::policy::{enumerate_candidates, Decision, Policy};
use clawgui_core::reward::{JudgeRequest, OutcomeJudge, RewardError, StepJudge};
use clawgui_core::simdevice::{Action, ScreenState, TaskSpec};
use rand_core::RngCore;

use crate::wire::{ChatMessage, ChatRequest, EndpointClient};

const POLICY_PROMPT: &str = "You operate a phone. Reply with one JSON action object, for example \
{\"type\":\"tap\",\"point\":{\"x\":10,\"y\":20}}, {\"type\":\"type_text\",\"widget_id\":\"to\",\"text\":\"bob\"}, \
{\"type\":\"back\"} or {\"type\":\"done\"}.";

/// Pull the first JSON object out of a reply and read it as an action.
pub fn parse_action_reply(text: &str) -> Option<Action> {
    let start = text.find('{')?;
    let end = text.rfind('}')?;
    if end < start {
        return None;
    }
    serde_json::from_str(&text[start..=end]).ok()
}

pub struct RemoteChatPolicy {
    client: EndpointClient,
    temperature: f64,
}

impl RemoteChatPolicy {
    pub fn new(client: EndpointClient, temperature: f64) -> Self {
        Self { client, temperature }
    }

    fn request(&self, obs: &ScreenState, task: &TaskSpec) -> ChatRequest {
        let screen = serde_json::to_string(obs).expect("screen states serialize");
        ChatRequest {
            model: self.client.spec().model.clone(),
            messages: vec![
                ChatMessage::system(POLICY_PROMPT),
                ChatMessage::user(format!("Task: {}\nScreen: {screen}", task.instruction)),
            ],
            temperature: Some(self.temperature),
            max_tokens: Some(256),
        }
    }
}

impl Policy for RemoteChatPolicy {
    /// The remote model is not differentiable here, so the returned
    /// log-probability is 0 and the candidate index is the matching
    /// enumerated candidate when there is one.
    fn decide(&self, obs: &ScreenState, task: &TaskSpec, _rng: &mut dyn RngCore) -> Decision {
        let action = match self.client.call(&self.request(obs, task)) {
            Ok(c) => parse_action_reply(c.text()).unwrap_or_else(|| {
                log::warn!("unparseable policy reply {:?}; using no-op", c.text());
                Action::noop()
            }),
            Err(e) => {
                log::warn!("policy endpoint failed: {e}; using no-op");
                Action::noop()
            }
        };
        let cands = enumerate_candidates(obs, task);
        let idx = cands.iter().position(|c| *c == action).unwrap_or(0);
        Decision { action, logprob: 0.0, candidate_index: idx as u32, candidate_count: cands.len() as u32 }
    }
}

pub struct RemoteJudge {
    client: EndpointClient,
}

impl RemoteJudge {
    pub fn new(client: EndpointClient) -> Self {
        Self { client }
    }

    fn ask(&self, question: &str, req: &JudgeRequest) -> Result<String, RewardError> {
        let body = serde_json::to_string(req).expect("judge requests serialize");
        let chat = ChatRequest {
            model: self.client.spec().model.clone(),
            messages: vec![ChatMessage::system(question), ChatMessage::user(body)],
            temperature: Some(0.0),
            max_tokens: Some(16),
        };
        self.client
            .call(&chat)
            .map(|c| c.text().trim().to_ascii_lowercase())
            .map_err(|e| RewardError::JudgeUnavailable(e.to_string()))
    }
}

impl OutcomeJudge for RemoteJudge {
    fn judge_outcome(&self, req: &JudgeRequest) -> Result<bool, RewardError> {
        let a = self.ask("Did the agent complete the task? Answer yes or no.", req)?;
        match a.split_whitespace().next().unwrap_or("") {
            "yes" | "yes." | "1" | "true" => Ok(true),
            "no" | "no." | "0" | "false" => Ok(false),
            other => Err(RewardError::JudgeUnavailable(format!("unreadable verdict {other:?}"))),
        }
    }
}

impl StepJudge for RemoteJudge {
    fn judge_step(&self, req: &JudgeRequest) -> Result<f64, RewardError> {
        let a = self.ask("Score how much the last action advanced the task, from 0 to 1.", req)?;
        a.split_whitespace()
            .next()
            .and_then(|t| t.parse::<f64>().ok())
            .ok_or_else(|| RewardError::JudgeUnavailable(format!("unreadable score {a:?}")))
    }
}
