//! The unified backend interface: anything that can reset to a task, take a
//! step and answer a health probe. The simulated backend wraps a
//! [`Device`]; the remote backend speaks JSON over HTTP to a device server.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;

use clawgui_core::simdevice::{Action, AppRegistry, Device, DeviceError, FaultKind, FaultPlan, ScreenState, TaskSpec};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackendKind {
    Simulated,
    Remote { url: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", content = "reason", rename_all = "snake_case")]
pub enum Health {
    Healthy,
    Unhealthy(FaultKind),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BackendError {
    #[error("environment faulted: {}", .0.as_str())]
    Faulted(FaultKind),
    #[error("device error: {0}")]
    Device(String),
    #[error("transport error: {0}")]
    Transport(String),
}

impl From<DeviceError> for BackendError {
    fn from(e: DeviceError) -> Self {
        match e {
            DeviceError::EnvFaulted(k) => BackendError::Faulted(k),
            other => BackendError::Device(other.to_string()),
        }
    }
}

/// One step as seen through a backend.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepOutcome {
    pub observation: ScreenState,
    pub terminal: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outcome_hint: Option<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub invalid: Option<String>,
}

pub trait EnvBackend: Send {
    fn kind(&self) -> BackendKind;
    fn reset(&mut self, task: &TaskSpec) -> Result<ScreenState, BackendError>;
    fn step(&mut self, action: &Action) -> Result<StepOutcome, BackendError>;
    /// Ping-style probe. Must not change environment state.
    fn probe(&mut self, timeout: Duration) -> Health;
    /// Install a fault schedule for the next episode, or clear it.
    fn set_faults(&mut self, plan: Option<FaultPlan>);
}

/// Creates fresh backends for new, replacement and torn-down environments.
pub trait BackendFactory: Send + Sync {
    fn create(&self, env_id: &str) -> Box<dyn EnvBackend>;
}

pub struct SimBackend {
    device: Device,
    fired: Option<Arc<AtomicU64>>,
}

impl SimBackend {
    pub fn new(registry: Arc<AppRegistry>) -> Self {
        Self { device: Device::new(registry), fired: None }
    }

    pub fn device(&self) -> &Device {
        &self.device
    }
}

impl EnvBackend for SimBackend {
    fn kind(&self) -> BackendKind {
        BackendKind::Simulated
    }

    fn reset(&mut self, task: &TaskSpec) -> Result<ScreenState, BackendError> {
        Ok(self.device.reset(task)?)
    }

    fn step(&mut self, action: &Action) -> Result<StepOutcome, BackendError> {
        let before = self.device.fault();
        let r = self.device.step(action);
        if before.is_none() && self.device.fault().is_some() {
            if let Some(c) = &self.fired {
                c.fetch_add(1, Ordering::Relaxed);
            }
        }
        let r = r?;
        Ok(StepOutcome {
            observation: r.observation,
            terminal: r.terminal,
            outcome_hint: r.outcome_hint,
            invalid: r.invalid.map(str::to_string),
        })
    }

    /// A crashed device fails the probe outright; a stalled one never
    /// answers, which the probe reports as a timeout without waiting it out.
    fn probe(&mut self, _timeout: Duration) -> Health {
        match self.device.fault() {
            None => Health::Healthy,
            Some(kind) => Health::Unhealthy(kind),
        }
    }

    fn set_faults(&mut self, plan: Option<FaultPlan>) {
        match plan {
            Some(p) => self.device.inject(p),
            None => self.device.clear_faults(),
        }
    }
}

/// Creates simulated backends and counts the faults they fire.
pub struct SimFactory {
    registry: Arc<AppRegistry>,
    fired: Arc<AtomicU64>,
}

impl SimFactory {
    pub fn new(registry: Arc<AppRegistry>) -> Self {
        Self { registry, fired: Arc::new(AtomicU64::new(0)) }
    }

    /// Faults fired by every backend this factory created.
    pub fn faults_fired(&self) -> u64 {
        self.fired.load(Ordering::Relaxed)
    }
}

impl BackendFactory for SimFactory {
    fn create(&self, _env_id: &str) -> Box<dyn EnvBackend> {
        let mut b = SimBackend::new(self.registry.clone());
        b.fired = Some(self.fired.clone());
        Box::new(b)
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub(crate) struct ErrorBody {
    pub error: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fault: Option<FaultKind>,
}

/// Client for a device server at `url` (see [`super::server`]).
pub struct RemoteBackend {
    url: String,
    agent: ureq::Agent,
}

impl RemoteBackend {
    pub fn new(url: &str, timeout: Duration) -> Self {
        let agent = ureq::AgentBuilder::new().timeout(timeout).build();
        Self { url: url.trim_end_matches('/').to_string(), agent }
    }

    fn post<T: Serialize, R: serde::de::DeserializeOwned>(&self, path: &str, body: &T) -> Result<R, BackendError> {
        let text = serde_json::to_string(body).map_err(|e| BackendError::Transport(e.to_string()))?;
        let resp = self
            .agent
            .post(&format!("{}{path}", self.url))
            .set("content-type", "application/json")
            .send_string(&text);
        match resp {
            Ok(r) => {
                let body = r.into_string().map_err(|e| BackendError::Transport(e.to_string()))?;
                serde_json::from_str(&body).map_err(|e| BackendError::Transport(e.to_string()))
            }
            Err(ureq::Error::Status(_, r)) => {
                let body = r.into_string().unwrap_or_default();
                match serde_json::from_str::<ErrorBody>(&body) {
                    Ok(ErrorBody { fault: Some(k), .. }) => Err(BackendError::Faulted(k)),
                    Ok(ErrorBody { error, .. }) => Err(BackendError::Device(error)),
                    Err(_) => Err(BackendError::Transport(body)),
                }
            }
            Err(e) => Err(BackendError::Transport(e.to_string())),
        }
    }
}

impl EnvBackend for RemoteBackend {
    fn kind(&self) -> BackendKind {
        BackendKind::Remote { url: self.url.clone() }
    }

    fn reset(&mut self, task: &TaskSpec) -> Result<ScreenState, BackendError> {
        self.post("/reset", task)
    }

    fn step(&mut self, action: &Action) -> Result<StepOutcome, BackendError> {
        self.post("/step", action)
    }

    fn probe(&mut self, timeout: Duration) -> Health {
        let resp = self.agent.get(&format!("{}/health", self.url)).timeout(timeout).call();
        match resp {
            Ok(_) => Health::Healthy,
            Err(ureq::Error::Status(_, r)) => {
                let fault = r.into_string().ok().and_then(|b| serde_json::from_str::<ErrorBody>(&b).ok()).and_then(|b| b.fault);
                Health::Unhealthy(fault.unwrap_or(FaultKind::Crash))
            }
            Err(ureq::Error::Transport(t)) if t.kind() == ureq::ErrorKind::Io => Health::Unhealthy(FaultKind::Stall),
            Err(_) => Health::Unhealthy(FaultKind::Crash),
        }
    }

    fn set_faults(&mut self, plan: Option<FaultPlan>) {
        if let Err(e) = self.post::<_, serde_json::Value>("/faults", &plan) {
            log::warn!("{}: could not install fault plan: {e}", self.url);
        }
    }
}

/// Hands out remote backends round-robin over a list of device servers.
pub struct RemoteFactory {
    pub urls: Vec<String>,
    pub timeout: Duration,
    next: std::sync::atomic::AtomicUsize,
}

impl RemoteFactory {
    pub fn new(urls: Vec<String>, timeout: Duration) -> Self {
        Self { urls, timeout, next: Default::default() }
    }
}

impl BackendFactory for RemoteFactory {
    fn create(&self, _env_id: &str) -> Box<dyn EnvBackend> {
        let i = self.next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
        Box::new(RemoteBackend::new(&self.urls[i % self.urls.len()], self.timeout))
    }
}
