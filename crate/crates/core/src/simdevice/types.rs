use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::geometry::{Point, Rect};

/// Simulator screen size in pixels.
pub const SCREEN_DIMS: (u32, u32) = (1080, 2400);
pub const DEFAULT_MAX_STEPS: u32 = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WidgetKind {
    Button,
    TextField,
    ListItem,
    Toggle,
    Label,
}

impl WidgetKind {
    pub const ALL: [WidgetKind; 5] = [
        WidgetKind::Button,
        WidgetKind::TextField,
        WidgetKind::ListItem,
        WidgetKind::Toggle,
        WidgetKind::Label,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            WidgetKind::Button => "button",
            WidgetKind::TextField => "text_field",
            WidgetKind::ListItem => "list_item",
            WidgetKind::Toggle => "toggle",
            WidgetKind::Label => "label",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Widget {
    pub widget_id: String,
    pub kind: WidgetKind,
    pub bbox: Rect,
    pub text: String,
    pub enabled: bool,
}

/// Structured observation of one screen.
///
/// Text fields and toggles store their value in `var_bindings` under their
/// own `widget_id`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScreenState {
    pub app_id: String,
    pub screen_id: String,
    pub widgets: Vec<Widget>,
    pub var_bindings: BTreeMap<String, String>,
    pub screen_dims: (u32, u32),
}

impl ScreenState {
    pub fn widget(&self, id: &str) -> Option<&Widget> {
        self.widgets.iter().find(|w| w.widget_id == id)
    }

    pub fn var(&self, name: &str) -> Option<&str> {
        self.var_bindings.get(name).map(String::as_str)
    }

    pub fn in_bounds(&self, p: Point) -> bool {
        p.x >= 0 && p.y >= 0 && (p.x as u32) <= self.screen_dims.0 && (p.y as u32) <= self.screen_dims.1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SwipeDirection {
    Up,
    Down,
    Left,
    Right,
}

impl SwipeDirection {
    /// Direction of finger travel, by dominant axis. `None` for a zero-length
    /// gesture.
    pub fn of(from: Point, to: Point) -> Option<Self> {
        let dx = i64::from(to.x) - i64::from(from.x);
        let dy = i64::from(to.y) - i64::from(from.y);
        if dx == 0 && dy == 0 {
            return None;
        }
        Some(if dx.abs() >= dy.abs() {
            if dx > 0 {
                SwipeDirection::Right
            } else {
                SwipeDirection::Left
            }
        } else if dy > 0 {
            SwipeDirection::Down
        } else {
            SwipeDirection::Up
        })
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SwipeDirection::Up => "up",
            SwipeDirection::Down => "down",
            SwipeDirection::Left => "left",
            SwipeDirection::Right => "right",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "up" => Some(SwipeDirection::Up),
            "down" => Some(SwipeDirection::Down),
            "left" => Some(SwipeDirection::Left),
            "right" => Some(SwipeDirection::Right),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Action {
    Tap { point: Point },
    Swipe { from: Point, to: Point },
    TypeText { widget_id: String, text: String },
    Back,
    Done {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        answer: Option<String>,
    },
}

impl Action {
    pub fn tap(x: i32, y: i32) -> Self {
        Action::Tap { point: Point::new(x, y) }
    }

    pub fn type_text(widget_id: &str, text: &str) -> Self {
        Action::TypeText { widget_id: widget_id.into(), text: text.into() }
    }

    pub fn done() -> Self {
        Action::Done { answer: None }
    }

    /// An action that is invalid on every screen (empty widget ids are
    /// rejected at app load), hence always a self-loop.
    pub fn noop() -> Self {
        Action::TypeText { widget_id: String::new(), text: String::new() }
    }

    pub fn template(&self) -> usize {
        match self {
            Action::Tap { .. } => 0,
            Action::Swipe { .. } => 1,
            Action::TypeText { .. } => 2,
            Action::Back => 3,
            Action::Done { .. } => 4,
        }
    }
}

/// Conjunction of an optional screen requirement and variable equalities.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GoalPredicate {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub screen: Option<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub vars: BTreeMap<String, String>,
}

impl GoalPredicate {
    pub fn holds(&self, screen_id: &str, vars: &BTreeMap<String, String>) -> bool {
        if let Some(s) = &self.screen {
            if s != screen_id {
                return false;
            }
        }
        self.vars.iter().all(|(k, v)| vars.get(k) == Some(v))
    }
}

fn default_max_steps() -> u32 {
    DEFAULT_MAX_STEPS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSpec {
    pub task_id: String,
    pub instruction: String,
    pub app_id: String,
    #[serde(default)]
    pub init_seed: u64,
    pub goal: GoalPredicate,
    #[serde(default = "default_max_steps")]
    pub max_steps: u32,
    /// Shortest-solution length, filled in by the suite builder.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub difficulty: Option<u32>,
    /// Stored reference solution, ending in `done`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub reference_solution: Vec<Action>,
    /// The app offers goal routes of different lengths.
    #[serde(default, skip_serializing_if = "core::ops::Not::not")]
    pub variable_length: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaultPlan {
    pub stall_prob: f64,
    pub crash_prob: f64,
    pub rng_seed: u64,
}

impl FaultPlan {
    pub fn none() -> Self {
        Self { stall_prob: 0.0, crash_prob: 0.0, rng_seed: 0 }
    }

    pub fn is_valid(&self) -> bool {
        (0.0..=1.0).contains(&self.stall_prob) && (0.0..=1.0).contains(&self.crash_prob)
    }
}
