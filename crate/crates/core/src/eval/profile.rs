use alloc::string::String;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoordinateConvention {
    /// Integers in [0, 1000] on both axes.
    Normalized0_1000,
    AbsolutePixels,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParserId {
    /// First coordinate pair in free text, e.g. `(x, y)`.
    Point,
    /// Function-call action syntax: `click(x, y)`, `type("text")`,
    /// `scroll(down)`, `back()`, `done()`.
    Action,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ZoomConfig {
    pub tile_fraction: f64,
    pub enabled: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ActionTolerance {
    /// Click distance tolerance as a fraction of the screen diagonal, used
    /// when the gold click has a point but no box.
    pub diag_fraction: f64,
}

impl Default for ActionTolerance {
    fn default() -> Self {
        Self { diag_fraction: 0.14 }
    }
}

fn default_refusal() -> String {
    "NOT_FOUND".into()
}

/// Every evaluation knob for one model, frozen for a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelProfile {
    pub model_id: String,
    pub prompt_template_id: String,
    pub coordinate_convention: CoordinateConvention,
    /// Resolution cap in pixels (width * height) for images sent to the
    /// endpoint.
    pub max_pixels: u64,
    pub temperature: f64,
    pub parser_id: ParserId,
    #[serde(default = "default_refusal")]
    pub refusal_token: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub zoom: Option<ZoomConfig>,
    #[serde(default)]
    pub action_tolerance: ActionTolerance,
}

impl ModelProfile {
    pub fn zoom_fraction(&self) -> Option<f64> {
        self.zoom.filter(|z| z.enabled).map(|z| z.tile_fraction)
    }
}
