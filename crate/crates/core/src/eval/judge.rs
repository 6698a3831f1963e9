use alloc::string::{String, ToString};
use serde::{Deserialize, Serialize};

use super::profile::ActionTolerance;
use super::sample::{ActionRecord, ActionType, BenchmarkSample, GroundTruth, Parsed, Prediction};
use crate::geometry::{Point, Rect};
use crate::simdevice::SwipeDirection;
use crate::text::normalize_ws;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JudgeReason {
    Hit,
    Miss,
    RefusalMatch,
    RefusalMismatch,
    ParseFailure,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgeResult {
    pub sample_id: String,
    pub correct: bool,
    pub reason: JudgeReason,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl JudgeResult {
    fn new(sample_id: &str, reason: JudgeReason) -> Self {
        let correct = matches!(reason, JudgeReason::Hit | JudgeReason::RefusalMatch);
        Self { sample_id: sample_id.to_string(), correct, reason, note: None }
    }

    fn with_note(mut self, note: String) -> Self {
        self.note = Some(note);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MultiActionError {
    #[error("unknown action type {0:?}")]
    UnknownActionType(String),
    #[error("gold {0} action lacks a target")]
    IncompleteGold(&'static str),
}

pub fn judge_point_in_box(point: Point, bbox: Rect) -> bool {
    bbox.contains(point)
}

fn on_segment(p: Point, a: Point, b: Point) -> bool {
    let (px, py) = (i128::from(p.x), i128::from(p.y));
    let (ax, ay) = (i128::from(a.x), i128::from(a.y));
    let (bx, by) = (i128::from(b.x), i128::from(b.y));
    let cross = (bx - ax) * (py - ay) - (by - ay) * (px - ax);
    cross == 0 && ax.min(bx) <= px && px <= ax.max(bx) && ay.min(by) <= py && py <= ay.max(by)
}

/// Even-odd containment with the boundary counted as inside. Exact on
/// integer coordinates.
pub fn point_in_polygon(p: Point, vertices: &[Point]) -> bool {
    let n = vertices.len();
    if n < 3 {
        return false;
    }
    let mut inside = false;
    for i in 0..n {
        let a = vertices[i];
        let b = vertices[(i + 1) % n];
        if on_segment(p, a, b) {
            return true;
        }
        if (a.y > p.y) != (b.y > p.y) {
            // Crossing x is ax + (py-ay)(bx-ax)/(by-ay); compare px < that
            // without division.
            let dy = i128::from(b.y) - i128::from(a.y);
            let lhs = (i128::from(p.x) - i128::from(a.x)) * dy;
            let rhs = (i128::from(p.y) - i128::from(a.y)) * (i128::from(b.x) - i128::from(a.x));
            let left_of = if dy > 0 { lhs < rhs } else { lhs > rhs };
            if left_of {
                inside = !inside;
            }
        }
    }
    inside
}

/// Polygon / refusal judge. Polygon ground truth wants a point inside;
/// refusal ground truth wants a refusal.
pub fn judge_polygon_refusal(parsed: &Parsed, ground_truth: &GroundTruth) -> JudgeReason {
    match (parsed, ground_truth) {
        (Parsed::ParseFailure, _) => JudgeReason::ParseFailure,
        (Parsed::Refusal, GroundTruth::Refusal) => JudgeReason::RefusalMatch,
        (Parsed::Refusal, _) | (_, GroundTruth::Refusal) => JudgeReason::RefusalMismatch,
        (Parsed::Point { point }, GroundTruth::Polygon { vertices }) => hit(point_in_polygon(*point, vertices)),
        (Parsed::Point { point }, GroundTruth::Bbox { bbox }) => hit(judge_point_in_box(*point, *bbox)),
        _ => JudgeReason::Miss,
    }
}

fn hit(b: bool) -> JudgeReason {
    if b {
        JudgeReason::Hit
    } else {
        JudgeReason::Miss
    }
}

fn direction(a: &ActionRecord) -> Option<SwipeDirection> {
    match &a.direction {
        Some(d) => SwipeDirection::parse(&normalize_ws(d)),
        None => SwipeDirection::of(a.start?, a.end?),
    }
}

/// Multi-action judge: types must agree, then per-type argument checks.
pub fn judge_multi_action(
    pred: &ActionRecord,
    gold: &ActionRecord,
    tolerance: &ActionTolerance,
    image_dims: (u32, u32),
) -> Result<bool, MultiActionError> {
    let pk = pred.kind();
    let gk = gold.kind();
    for k in [&pk, &gk] {
        if let ActionType::Other(name) = k {
            return Err(MultiActionError::UnknownActionType(name.clone()));
        }
    }
    if pk != gk {
        return Ok(false);
    }
    Ok(match gk {
        ActionType::Click | ActionType::LongPress => {
            let Some(p) = pred.point else { return Ok(false) };
            if let Some(b) = gold.bbox {
                b.contains(p)
            } else if let Some(g) = gold.point {
                let (w, h) = (f64::from(image_dims.0), f64::from(image_dims.1));
                let limit = tolerance.diag_fraction * libm::sqrt(w * w + h * h);
                let dx = f64::from(p.x) - f64::from(g.x);
                let dy = f64::from(p.y) - f64::from(g.y);
                libm::sqrt(dx * dx + dy * dy) <= limit
            } else {
                return Err(MultiActionError::IncompleteGold("click"));
            }
        }
        ActionType::Type => {
            let Some(g) = &gold.text else { return Err(MultiActionError::IncompleteGold("type")) };
            pred.text.as_deref().is_some_and(|t| normalize_ws(t) == normalize_ws(g))
        }
        ActionType::Scroll => {
            let Some(g) = direction(gold) else { return Err(MultiActionError::IncompleteGold("scroll")) };
            direction(pred) == Some(g)
        }
        ActionType::Back | ActionType::Home | ActionType::Wait | ActionType::Done => true,
        ActionType::Other(_) => unreachable!(),
    })
}

/// Route a prediction to the judge family matching its ground truth.
pub fn judge_sample(sample: &BenchmarkSample, pred: &Prediction, tolerance: &ActionTolerance) -> JudgeResult {
    let id = sample.sample_id.as_str();
    match (&sample.ground_truth, &pred.parsed) {
        (_, Parsed::ParseFailure) => JudgeResult::new(id, JudgeReason::ParseFailure),
        (GroundTruth::Action { action: gold }, Parsed::Action { action }) => {
            match judge_multi_action(action, gold, tolerance, sample.image_dims) {
                Ok(b) => JudgeResult::new(id, hit(b)),
                Err(e) => JudgeResult::new(id, JudgeReason::Miss).with_note(e.to_string()),
            }
        }
        (GroundTruth::Action { .. }, Parsed::Refusal) => JudgeResult::new(id, JudgeReason::RefusalMismatch),
        (GroundTruth::Action { .. }, _) => JudgeResult::new(id, JudgeReason::Miss),
        (gt, parsed) => JudgeResult::new(id, judge_polygon_refusal(parsed, gt)),
    }
}
