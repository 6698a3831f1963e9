use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::geometry::{Point, Rect};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SampleError {
    #[error("sample {0}: polygon needs at least 3 vertices")]
    DegeneratePolygon(String),
    #[error("sample {0}: ground truth lies outside the image")]
    OutOfImage(String),
}

/// Normalized action type. Unknown strings stay `Other` and never match.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ActionType {
    Click,
    LongPress,
    Type,
    Scroll,
    Back,
    Home,
    Wait,
    Done,
    Other(String),
}

impl ActionType {
    pub fn parse(s: &str) -> Self {
        let lower = crate::text::normalize_ws(s);
        match lower.as_str() {
            "click" | "tap" => ActionType::Click,
            "long_press" | "longpress" => ActionType::LongPress,
            "type" | "input" | "input_text" => ActionType::Type,
            "scroll" | "swipe" => ActionType::Scroll,
            "back" | "navigate_back" => ActionType::Back,
            "home" | "navigate_home" => ActionType::Home,
            "wait" => ActionType::Wait,
            "done" | "finish" | "complete" | "terminate" => ActionType::Done,
            _ => ActionType::Other(lower),
        }
    }

    pub fn is_known(&self) -> bool {
        !matches!(self, ActionType::Other(_))
    }
}

/// An action as recorded by a benchmark or parsed from model output.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ActionRecord {
    pub action_type: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub point: Option<Point>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bbox: Option<Rect>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub direction: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start: Option<Point>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub end: Option<Point>,
}

impl ActionRecord {
    pub fn kind(&self) -> ActionType {
        ActionType::parse(&self.action_type)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum GroundTruth {
    Bbox { bbox: Rect },
    Polygon { vertices: Vec<Point> },
    Refusal,
    Action { action: ActionRecord },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkSample {
    pub sample_id: String,
    pub image_ref: String,
    pub image_dims: (u32, u32),
    pub instruction: String,
    pub ground_truth: GroundTruth,
    /// Breakdown axes, e.g. `platform`, `element_type`, `task_category`.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub categories: BTreeMap<String, String>,
}

impl BenchmarkSample {
    pub fn validate(&self) -> Result<(), SampleError> {
        let (w, h) = self.image_dims;
        let inside = |p: &Point| p.x >= 0 && p.y >= 0 && p.x as u32 <= w && p.y as u32 <= h;
        match &self.ground_truth {
            GroundTruth::Bbox { bbox } if !bbox.within(w, h) => Err(SampleError::OutOfImage(self.sample_id.clone())),
            GroundTruth::Polygon { vertices } if vertices.len() < 3 => {
                Err(SampleError::DegeneratePolygon(self.sample_id.clone()))
            }
            GroundTruth::Polygon { vertices } if !vertices.iter().all(inside) => {
                Err(SampleError::OutOfImage(self.sample_id.clone()))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Parsed {
    /// Pixel coordinates in the original image.
    Point { point: Point },
    Action { action: ActionRecord },
    Refusal,
    ParseFailure,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    pub sample_id: String,
    pub raw_output: String,
    pub parsed: Parsed,
    /// Raw output of every endpoint call, in order (two for zoom).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub stage_outputs: Vec<String>,
}
