//! Deterministic simulated GUI device.
//!
//! Apps are finite screen graphs ([`AppGraph`]) whose screens carry widgets
//! and whose transitions mutate a small map of string variables. A
//! [`Device`] holds one app state at a time, applies [`Action`]s, and can be
//! told to fail on a seeded schedule ([`FaultPlan`]). Goal checks and the
//! shortest-path oracle read the same state, so rewards and test oracles
//! never depend on rendering.

mod anchor;
mod app;
mod device;
mod oracle;
mod types;

pub use anchor::{anchor_hash, canonical_bytes, AnchorKey};
pub use app::{AppError, AppGraph, AppRegistry, Effect, ScreenSpec, Transition, Trigger, VarCondition, WidgetSpec};
pub use device::{verify_outcome, Device, DeviceError, FaultInjector, FaultKind, StepResult};
pub use oracle::{canonical_actions, oracle_distance, DistanceTable, SEARCH_STATE_CAP};
pub use types::{
    Action, FaultPlan, GoalPredicate, ScreenState, SwipeDirection, TaskSpec, Widget, WidgetKind, DEFAULT_MAX_STEPS,
    SCREEN_DIMS,
};
