//! Core of the GUI-agent training and evaluation stack.
//!
//! Everything in this crate is deterministic and allocation-only: the
//! simulated device and its shortest-path oracle, reward composition,
//! group-relative credit assignment, the linear-softmax policy, and the
//! evaluation judges. IO, threads, HTTP and the CLI live in the `clawgui`
//! crate.

#![no_std]

extern crate alloc;

pub mod credit;
pub mod digest;
pub mod eval;
pub mod geometry;
pub mod policy;
pub mod reward;
pub mod rollout;
pub mod simdevice;
pub mod text;

pub use credit::{AdvantageSet, CreditConfig, Estimator};
pub use geometry::{Point, Rect};
pub use rollout::{RolloutGroup, StepRecord, Termination, Trajectory};
pub use simdevice::{Action, AnchorKey, Device, ScreenState, TaskSpec};
