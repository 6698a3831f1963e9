#![allow(dead_code)]

use std::sync::Arc;

use clawgui_core::rollout::{RolloutGroup, StepRecord, Termination, Trajectory};
use clawgui_core::simdevice::{Action, AnchorKey, AppGraph, AppRegistry, TaskSpec};

/// Three screens. Wifi can be saved two ways: through settings (open,
/// toggle, save) or through the quick panel (swipe up, tap apply), so the
/// goal sits at distance 2 from reset with a 3-step detour available.
pub const TOY_APP: &str = r#"{
  "app_id": "toy",
  "start_screen": "home",
  "screen_dims": [1080, 2400],
  "vars": {"saved_wifi": "off"},
  "seeded_vars": {"wifi": ["off", "on"]},
  "screens": [
    {"screen_id": "home",
     "widgets": [
       {"widget_id": "settings", "kind": "button", "bbox": [60, 200, 1020, 380], "text": "Settings"},
       {"widget_id": "title", "kind": "label", "bbox": [60, 20, 1020, 180], "text": "Home"}
     ],
     "transitions": [
       {"on": "tap:settings", "to": "settings"},
       {"on": "swipe:up", "to": "quick"}
     ]},
    {"screen_id": "settings",
     "widgets": [
       {"widget_id": "wifi", "kind": "toggle", "bbox": [60, 200, 1020, 380], "text": "Wifi {wifi}"},
       {"widget_id": "name", "kind": "text_field", "bbox": [60, 420, 1020, 600], "text": "{name}"},
       {"widget_id": "save", "kind": "button", "bbox": [60, 640, 1020, 820], "text": "Save",
        "disabled_when": {"var": "wifi", "equals": "off"}}
     ],
     "transitions": [
       {"on": "tap:save", "to": "home", "effects": [{"op": "copy", "from": "wifi", "to": "saved_wifi"}]},
       {"on": "back", "to": "home"}
     ]},
    {"screen_id": "quick",
     "widgets": [
       {"widget_id": "apply", "kind": "button", "bbox": [60, 200, 1020, 380], "text": "Wifi on"}
     ],
     "transitions": [
       {"on": "tap:apply", "to": "home", "effects": [{"op": "set", "var": "saved_wifi", "value": "on"}]},
       {"on": "back", "to": "home"}
     ]}
  ]
}"#;

pub fn toy_app() -> AppGraph {
    serde_json::from_str(TOY_APP).expect("fixture app parses")
}

pub fn toy_registry() -> Arc<AppRegistry> {
    Arc::new(AppRegistry::from_apps([toy_app()]).expect("fixture app is valid"))
}

pub fn toy_task(init_seed: u64) -> TaskSpec {
    serde_json::from_value(serde_json::json!({
        "task_id": "toy-wifi",
        "instruction": "Turn on wifi and save it as home",
        "app_id": "toy",
        "init_seed": init_seed,
        "goal": {"screen": "home", "vars": {"saved_wifi": "on"}},
        "max_steps": 12
    }))
    .expect("fixture task parses")
}

pub fn key(b: u8) -> AnchorKey {
    AnchorKey([b; 16])
}

pub fn step(anchor: u8, reward: f64) -> StepRecord {
    StepRecord {
        anchor: key(anchor),
        action: Action::Back,
        logprob: 0.0,
        reward,
        candidate_count: 1,
        candidate_index: 0,
        observation: None,
    }
}

/// Trajectory from `(anchor, reward)` pairs.
pub fn traj(id: usize, steps: &[(u8, f64)]) -> Trajectory {
    Trajectory {
        task_id: "t".into(),
        rollout_id: format!("r{id}"),
        steps: steps.iter().map(|&(a, r)| step(a, r)).collect(),
        outcome: 0,
        termination: Termination::Done,
    }
}

pub fn group(trajs: &[Vec<(u8, f64)>]) -> RolloutGroup {
    RolloutGroup::new("t", trajs.iter().enumerate().map(|(i, s)| traj(i, s)).collect()).unwrap()
}
