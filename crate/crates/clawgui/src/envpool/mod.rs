//! Environment pool: acquisition and reset, health probes, spare rotation,
//! periodic teardown, and a `doctor` status report.
//!
//! The pool is shared by all rollout workers. Pool bookkeeping sits behind
//! one mutex; the backend itself moves into the [`Lease`] while an env is
//! leased, so env interaction never holds the pool lock and a second worker
//! cannot reach a leased env.
//!
//! Spare replenishment: a retired env leaves a pending replacement. Pending
//! replacements are provisioned as fresh spares when any lease is released
//! or when a rotation finds the spare queue empty, so with replenishment on,
//! `promoted = initial_spares + replenished - spare_depth`.

mod backend;
mod server;

use std::collections::{BTreeMap, VecDeque};
use std::sync::{Arc, Condvar, Mutex, MutexGuard};
use std::time::{Duration, Instant};

use clawgui_core::digest::{derive_seed, str_label};
use clawgui_core::simdevice::{Action, FaultKind, FaultPlan, ScreenState, TaskSpec};
use serde::{Deserialize, Serialize};

pub use backend::{
    BackendError, BackendFactory, BackendKind, EnvBackend, Health, RemoteBackend, RemoteFactory, SimBackend,
    SimFactory, StepOutcome,
};
pub use server::serve_device;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PoolConfig {
    pub pool_size: usize,
    pub spare_count: usize,
    pub health_timeout_ms: u64,
    pub teardown_every_episodes: u64,
    /// Bound on how long `acquire` waits for an idle env.
    pub acquire_timeout_ms: u64,
    /// Recreate retired envs as fresh spares.
    pub replenish_spares: bool,
    pub fault_plan: Option<FaultPlan>,
}

impl Default for PoolConfig {
    fn default() -> Self {
        Self {
            pool_size: 64,
            spare_count: 8,
            health_timeout_ms: 1_000,
            teardown_every_episodes: 50,
            acquire_timeout_ms: 30_000,
            replenish_spares: true,
            fault_plan: None,
        }
    }
}

impl PoolConfig {
    pub fn validate(&self, prefix: &str, errors: &mut Vec<String>) {
        if self.pool_size == 0 {
            errors.push(format!("{prefix}.pool_size must be at least 1"));
        }
        if self.health_timeout_ms == 0 {
            errors.push(format!("{prefix}.health_timeout_ms must be positive"));
        }
        if self.teardown_every_episodes == 0 {
            errors.push(format!("{prefix}.teardown_every_episodes must be positive"));
        }
        if let Some(p) = &self.fault_plan {
            if !p.is_valid() {
                errors.push(format!("{prefix}.fault_plan probabilities must lie in [0, 1]"));
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvStatus {
    Idle,
    Leased,
    Unhealthy,
    Retired,
}

/// Public view of one environment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnvHandle {
    pub env_id: String,
    pub backend: BackendKind,
    pub status: EnvStatus,
    pub lease_owner: Option<String>,
    pub episodes_served: u64,
    /// Still waiting in the spare queue.
    pub spare: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PoolError {
    #[error("pool is not initialized")]
    PoolNotInitialized,
    #[error("no healthy environment within {0} ms")]
    PoolExhausted(u64),
    #[error("spare queue is empty")]
    SparesExhausted,
    #[error("{worker} does not hold the lease on {env_id}")]
    NotLeaseOwner { env_id: String, worker: String },
    #[error("{0} is healthy; nothing to rotate")]
    NotUnhealthy(String),
    #[error(transparent)]
    Backend(#[from] BackendError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RotationEvent {
    pub retired: String,
    pub promoted: String,
    pub worker_id: String,
    pub reason: FaultKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DoctorReport {
    pub initialized: bool,
    pub idle: usize,
    pub leased: usize,
    pub unhealthy: usize,
    pub retired: usize,
    pub spare_depth: usize,
    pub initial_spares: usize,
    pub spares_promoted: u64,
    pub spares_replenished: u64,
    pub rotations: u64,
    pub teardowns: u64,
    pub unhealthy_detected: u64,
    pub rotation_log: Vec<RotationEvent>,
}

impl std::fmt::Display for DoctorReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "initialized      {}", self.initialized)?;
        writeln!(f, "idle             {}", self.idle)?;
        writeln!(f, "leased           {}", self.leased)?;
        writeln!(f, "unhealthy        {}", self.unhealthy)?;
        writeln!(f, "retired          {}", self.retired)?;
        writeln!(f, "spare depth      {} (initial {})", self.spare_depth, self.initial_spares)?;
        writeln!(f, "spares promoted  {}", self.spares_promoted)?;
        writeln!(f, "spares refilled  {}", self.spares_replenished)?;
        writeln!(f, "rotations        {}", self.rotations)?;
        writeln!(f, "teardowns        {}", self.teardowns)?;
        for r in &self.rotation_log {
            writeln!(f, "  rotate {} -> {} ({}, {})", r.retired, r.promoted, r.worker_id, r.reason.as_str())?;
        }
        Ok(())
    }
}

/// Exclusive use of one environment by one worker.
pub struct Lease {
    env_id: String,
    worker_id: String,
    task: TaskSpec,
    backend: Box<dyn EnvBackend>,
    unhealthy: Option<FaultKind>,
}

impl std::fmt::Debug for Lease {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Lease").field("env_id", &self.env_id).field("worker_id", &self.worker_id).finish()
    }
}

impl Lease {
    pub fn env_id(&self) -> &str {
        &self.env_id
    }

    pub fn worker_id(&self) -> &str {
        &self.worker_id
    }

    pub fn task(&self) -> &TaskSpec {
        &self.task
    }

    pub fn step(&mut self, action: &Action) -> Result<StepOutcome, BackendError> {
        self.backend.step(action)
    }
}

struct Slot {
    handle: EnvHandle,
    backend: Option<Box<dyn EnvBackend>>,
}

#[derive(Default)]
struct State {
    initialized: bool,
    slots: BTreeMap<String, Slot>,
    idle: VecDeque<String>,
    spares: VecDeque<String>,
    next_id: u64,
    pending_replacements: usize,
    attempts: BTreeMap<String, u64>,
    initial_spares: usize,
    promoted: u64,
    replenished: u64,
    rotations: u64,
    teardowns: u64,
    unhealthy_detected: u64,
    log: Vec<RotationEvent>,
}

pub struct EnvPool {
    config: PoolConfig,
    factory: Arc<dyn BackendFactory>,
    state: Mutex<State>,
    available: Condvar,
}

impl EnvPool {
    /// Create and initialize a pool.
    pub fn new(config: PoolConfig, factory: Arc<dyn BackendFactory>) -> Self {
        let pool = Self { config, factory, state: Mutex::new(State::default()), available: Condvar::new() };
        pool.init();
        pool
    }

    pub fn config(&self) -> &PoolConfig {
        &self.config
    }

    fn lock(&self) -> MutexGuard<'_, State> {
        self.state.lock().unwrap_or_else(|p| p.into_inner())
    }

    fn create(&self, st: &mut State, spare: bool) -> String {
        let env_id = format!("env-{:04}", st.next_id);
        st.next_id += 1;
        let backend = self.factory.create(&env_id);
        let handle = EnvHandle {
            env_id: env_id.clone(),
            backend: backend.kind(),
            status: EnvStatus::Idle,
            lease_owner: None,
            episodes_served: 0,
            spare,
        };
        st.slots.insert(env_id.clone(), Slot { handle, backend: Some(backend) });
        env_id
    }

    /// (Re)create `pool_size` envs and `spare_count` spares. Existing
    /// handles stay retired.
    pub fn init(&self) {
        let mut st = self.lock();
        if st.initialized {
            return;
        }
        for _ in 0..self.config.pool_size {
            let id = self.create(&mut st, false);
            st.idle.push_back(id);
        }
        for _ in 0..self.config.spare_count {
            let id = self.create(&mut st, true);
            st.spares.push_back(id);
        }
        st.initial_spares = self.config.spare_count;
        st.pending_replacements = 0;
        st.initialized = true;
        drop(st);
        self.available.notify_all();
    }

    fn episode_faults(&self, st: &mut State, worker_id: &str) -> Option<FaultPlan> {
        let attempt = st.attempts.entry(worker_id.to_string()).or_insert(0);
        let n = *attempt;
        *attempt += 1;
        self.config.fault_plan.map(|p| FaultPlan {
            rng_seed: derive_seed(p.rng_seed, &[str_label(worker_id), n]),
            ..p
        })
    }

    /// Take the backend of `env_id` out of its slot and lease it.
    fn lease_slot(&self, st: &mut State, env_id: &str, worker_id: &str, task: &TaskSpec) -> Lease {
        let plan = self.episode_faults(st, worker_id);
        let slot = st.slots.get_mut(env_id).expect("slot exists");
        slot.handle.status = EnvStatus::Leased;
        slot.handle.lease_owner = Some(worker_id.to_string());
        slot.handle.spare = false;
        let mut backend = slot.backend.take().expect("idle slot holds its backend");
        backend.set_faults(plan);
        Lease { env_id: env_id.to_string(), worker_id: worker_id.to_string(), task: task.clone(), backend, unhealthy: None }
    }

    fn retire(&self, st: &mut State, env_id: &str) {
        if let Some(slot) = st.slots.get_mut(env_id) {
            if slot.handle.status != EnvStatus::Retired {
                slot.handle.status = EnvStatus::Retired;
                slot.handle.lease_owner = None;
                slot.backend = None;
                st.pending_replacements += 1;
            }
        }
    }

    fn replenish(&self, st: &mut State) {
        if !self.config.replenish_spares {
            return;
        }
        while st.pending_replacements > 0 {
            st.pending_replacements -= 1;
            let id = self.create(st, true);
            st.spares.push_back(id);
            st.replenished += 1;
        }
    }

    /// Promote a spare in place of `retired` and lease it to `worker_id`.
    fn promote(&self, st: &mut State, retired: &str, reason: FaultKind, worker_id: &str, task: &TaskSpec) -> Result<Lease, PoolError> {
        if st.spares.is_empty() && st.pending_replacements > 0 {
            self.replenish(st);
        }
        let had_spare = !st.spares.is_empty();
        self.retire(st, retired);
        if !had_spare {
            return Err(PoolError::SparesExhausted);
        }
        let spare = st.spares.pop_front().expect("checked non-empty");
        st.promoted += 1;
        st.rotations += 1;
        st.log.push(RotationEvent {
            retired: retired.to_string(),
            promoted: spare.clone(),
            worker_id: worker_id.to_string(),
            reason,
        });
        Ok(self.lease_slot(st, &spare, worker_id, task))
    }

    /// Lease a healthy env reset to `task`. Waits up to the configured bound
    /// when every env is busy.
    pub fn acquire(&self, task: &TaskSpec, worker_id: &str) -> Result<(Lease, ScreenState), PoolError> {
        let deadline = Instant::now() + Duration::from_millis(self.config.acquire_timeout_ms);
        let mut lease = {
            let mut st = self.lock();
            loop {
                if !st.initialized {
                    return Err(PoolError::PoolNotInitialized);
                }
                if let Some(id) = st.idle.pop_front() {
                    break self.lease_slot(&mut st, &id, worker_id, task);
                }
                let sick = st
                    .slots
                    .values()
                    .find(|s| s.handle.status == EnvStatus::Unhealthy && s.handle.lease_owner.is_none())
                    .map(|s| s.handle.env_id.clone());
                if let Some(id) = sick {
                    break self.promote(&mut st, &id, FaultKind::Crash, worker_id, task)?;
                }
                let now = Instant::now();
                if now >= deadline {
                    return Err(PoolError::PoolExhausted(self.config.acquire_timeout_ms));
                }
                st = self.available.wait_timeout(st, deadline - now).unwrap_or_else(|p| p.into_inner()).0;
            }
        };
        self.reset_or_rotate(&mut lease)
            .map(|obs| (lease, obs))
    }

    /// Reset the leased backend; a backend that faults on reset is rotated.
    fn reset_or_rotate(&self, lease: &mut Lease) -> Result<ScreenState, PoolError> {
        loop {
            match lease.backend.reset(&lease.task) {
                Ok(obs) => return Ok(obs),
                Err(BackendError::Faulted(kind)) => {
                    let mut st = self.lock();
                    st.unhealthy_detected += 1;
                    let next = self.promote(&mut st, &lease.env_id, kind, &lease.worker_id, &lease.task)?;
                    *lease = next;
                }
                Err(e) => return Err(e.into()),
            }
        }
    }

    /// Probe the leased env. An unhealthy result marks the handle.
    pub fn health_check(&self, lease: &mut Lease) -> Health {
        let h = lease.backend.probe(Duration::from_millis(self.config.health_timeout_ms));
        if let Health::Unhealthy(kind) = h {
            let mut st = self.lock();
            if let Some(slot) = st.slots.get_mut(&lease.env_id) {
                if slot.handle.status == EnvStatus::Leased {
                    slot.handle.status = EnvStatus::Unhealthy;
                    st.unhealthy_detected += 1;
                }
            }
            lease.unhealthy = Some(kind);
        }
        h
    }

    /// Mark an idle env unhealthy, e.g. on an external monitor's report.
    pub fn mark_unhealthy(&self, env_id: &str) -> bool {
        let mut st = self.lock();
        let Some(slot) = st.slots.get_mut(env_id) else { return false };
        if slot.handle.status != EnvStatus::Idle || slot.handle.spare {
            return false;
        }
        slot.handle.status = EnvStatus::Unhealthy;
        st.idle.retain(|id| id != env_id);
        st.unhealthy_detected += 1;
        true
    }

    /// Retire the lease's unhealthy env and continue the worker's episode on
    /// a spare, reset to the same task.
    pub fn rotate_spare(&self, mut lease: Lease) -> Result<(Lease, ScreenState), PoolError> {
        let reason = match lease.unhealthy {
            Some(k) => k,
            None => match self.health_check(&mut lease) {
                Health::Unhealthy(k) => k,
                Health::Healthy => {
                    let id = lease.env_id.clone();
                    self.return_slot(lease, false);
                    return Err(PoolError::NotUnhealthy(id));
                }
            },
        };
        let mut next = {
            let mut st = self.lock();
            self.promote(&mut st, &lease.env_id, reason, &lease.worker_id, &lease.task)?
        };
        drop(lease);
        let obs = self.reset_or_rotate(&mut next)?;
        Ok((next, obs))
    }

    fn return_slot(&self, mut lease: Lease, count_episode: bool) {
        let mut st = self.lock();
        let teardown_every = self.config.teardown_every_episodes;
        let Some(slot) = st.slots.get_mut(&lease.env_id) else { return };
        if slot.handle.status == EnvStatus::Retired {
            return;
        }
        lease.backend.set_faults(None);
        let mut torn_down = false;
        if count_episode {
            slot.handle.episodes_served += 1;
            if slot.handle.episodes_served % teardown_every == 0 {
                lease.backend = self.factory.create(&lease.env_id);
                torn_down = true;
            }
        }
        slot.handle.status = EnvStatus::Idle;
        slot.handle.lease_owner = None;
        slot.backend = Some(lease.backend);
        st.idle.push_back(lease.env_id.clone());
        if torn_down {
            st.teardowns += 1;
        }
        self.replenish(&mut st);
        drop(st);
        self.available.notify_one();
    }

    /// Return a leased env to the idle set, tearing it down and recreating
    /// it every `teardown_every_episodes` episodes.
    pub fn release(&self, lease: Lease) -> Result<(), PoolError> {
        {
            let st = self.lock();
            let owner = st.slots.get(&lease.env_id).and_then(|s| s.handle.lease_owner.clone());
            let retired = st.slots.get(&lease.env_id).is_some_and(|s| s.handle.status == EnvStatus::Retired);
            if !retired && owner.as_deref() != Some(lease.worker_id.as_str()) {
                return Err(PoolError::NotLeaseOwner { env_id: lease.env_id.clone(), worker: lease.worker_id.clone() });
            }
        }
        self.return_slot(lease, true);
        Ok(())
    }

    /// Retire every env. The pool must be re-initialized before use.
    pub fn teardown_all(&self) {
        let mut st = self.lock();
        let ids: Vec<String> = st.slots.keys().cloned().collect();
        for id in ids {
            self.retire(&mut st, &id);
        }
        st.idle.clear();
        st.spares.clear();
        st.pending_replacements = 0;
        st.initialized = false;
        drop(st);
        self.available.notify_all();
    }

    pub fn handles(&self) -> Vec<EnvHandle> {
        self.lock().slots.values().map(|s| s.handle.clone()).collect()
    }

    pub fn spare_depth(&self) -> usize {
        self.lock().spares.len()
    }

    pub fn rotations(&self) -> u64 {
        self.lock().rotations
    }

    pub fn doctor(&self) -> DoctorReport {
        let st = self.lock();
        let count = |s: EnvStatus| st.slots.values().filter(|x| x.handle.status == s && !x.handle.spare).count();
        DoctorReport {
            initialized: st.initialized,
            idle: count(EnvStatus::Idle),
            leased: count(EnvStatus::Leased),
            unhealthy: count(EnvStatus::Unhealthy),
            retired: st.slots.values().filter(|x| x.handle.status == EnvStatus::Retired).count(),
            spare_depth: st.spares.len(),
            initial_spares: st.initial_spares,
            spares_promoted: st.promoted,
            spares_replenished: st.replenished,
            rotations: st.rotations,
            teardowns: st.teardowns,
            unhealthy_detected: st.unhealthy_detected,
            rotation_log: st.log.clone(),
        }
    }
}
