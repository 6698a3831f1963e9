//! Deterministic grounding endpoint for tests and offline runs.
//!
//! It reads the image it is sent and answers with the target pixel nearest
//! the centroid of the red region, preferring pixels whose neighbours are
//! red too so a one-pixel rounding shift still lands inside. Prompts that
//! carry the coarse marker get a deterministic offset of up to
//! `coarse_noise` of each image side. No red pixels means a refusal.

use std::collections::HashMap;

use base64::Engine;
use image::RgbImage;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use clawgui_core::eval::CoordinateConvention;

use super::benchgen::is_target;
use super::infer::COARSE_MARKER;
use crate::http::MockServer;
use crate::wire::{serve_chat, ChatRequest};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GroundingMock {
    pub convention: CoordinateConvention,
    pub refusal_token: String,
    /// Fraction of each side by which coarse answers may be off.
    pub coarse_noise: f64,
    /// Answer `click(x, y)` instead of a bare point.
    pub action_style: bool,
    /// Each distinct request fails with HTTP 500 this many times before it
    /// is answered.
    pub failures_per_request: u32,
}

impl Default for GroundingMock {
    fn default() -> Self {
        Self {
            convention: CoordinateConvention::AbsolutePixels,
            refusal_token: "NOT_FOUND".into(),
            coarse_noise: 0.1,
            action_style: false,
            failures_per_request: 0,
        }
    }
}

fn decode_data_url(url: &str) -> Option<RgbImage> {
    let b64 = url.strip_prefix("data:image/png;base64,")?;
    let bytes = base64::engine::general_purpose::STANDARD.decode(b64).ok()?;
    Some(image::load_from_memory(&bytes).ok()?.to_rgb8())
}

/// The pixel a perfect grounder would pick, in image pixels.
pub fn target_pixel(img: &RgbImage) -> Option<(u32, u32)> {
    let red = |x: i64, y: i64| {
        x >= 0 && y >= 0 && x < i64::from(img.width()) && y < i64::from(img.height())
            && is_target(img.get_pixel(x as u32, y as u32))
    };
    let mut pts = Vec::new();
    for (x, y, p) in img.enumerate_pixels() {
        if is_target(p) {
            pts.push((x, y));
        }
    }
    if pts.is_empty() {
        return None;
    }
    let n = pts.len() as f64;
    let cx = pts.iter().map(|p| f64::from(p.0)).sum::<f64>() / n;
    let cy = pts.iter().map(|p| f64::from(p.1)).sum::<f64>() / n;
    let interior = |&(x, y): &(u32, u32)| {
        let (x, y) = (i64::from(x), i64::from(y));
        [(2, 0), (-2, 0), (0, 2), (0, -2), (2, 2), (-2, -2), (2, -2), (-2, 2)]
            .iter()
            .all(|(dx, dy)| red(x + dx, y + dy))
    };
    let dist = |p: &&(u32, u32)| (f64::from(p.0) - cx).powi(2) + (f64::from(p.1) - cy).powi(2);
    let best = pts
        .iter()
        .filter(|p| interior(p))
        .min_by(|a, b| dist(a).total_cmp(&dist(b)))
        .or_else(|| pts.iter().min_by(|a, b| dist(a).total_cmp(&dist(b))))?;
    Some(*best)
}

/// Offset in [-1, 1] on each axis, fixed by the prompt text.
fn noise(text: &str) -> (f64, f64) {
    let d = Sha256::digest(text.as_bytes());
    let u = |i: usize| f64::from(u32::from_le_bytes([d[i], d[i + 1], d[i + 2], d[i + 3]])) / f64::from(u32::MAX);
    (2.0 * u(0) - 1.0, 2.0 * u(4) - 1.0)
}

impl GroundingMock {
    /// Reply text for one request, or `None` when the request has no image.
    pub fn answer(&self, req: &ChatRequest) -> Option<String> {
        let msg = req.messages.iter().rev().find(|m| !m.content.image_urls().is_empty())?;
        let img = decode_data_url(msg.content.image_urls()[0])?;
        let text = msg.content.text();
        let Some((mut x, mut y)) = target_pixel(&img) else {
            return Some(self.refusal_token.clone());
        };
        let (w, h) = img.dimensions();
        if text.contains(COARSE_MARKER) {
            let (nx, ny) = noise(&text);
            let ox = (nx * self.coarse_noise * f64::from(w)).round() as i64;
            let oy = (ny * self.coarse_noise * f64::from(h)).round() as i64;
            x = (i64::from(x) + ox).clamp(0, i64::from(w) - 1) as u32;
            y = (i64::from(y) + oy).clamp(0, i64::from(h) - 1) as u32;
        }
        let (ax, ay) = match self.convention {
            CoordinateConvention::AbsolutePixels => (x, y),
            CoordinateConvention::Normalized0_1000 => (
                (f64::from(x) * 1000.0 / f64::from(w)).round() as u32,
                (f64::from(y) * 1000.0 / f64::from(h)).round() as u32,
            ),
        };
        Some(if self.action_style { format!("click({ax}, {ay})") } else { format!("({ax}, {ay})") })
    }

    pub fn serve(self) -> std::io::Result<MockServer> {
        let mut seen: HashMap<Vec<u8>, u32> = HashMap::new();
        serve_chat(move |req| {
            if self.failures_per_request > 0 {
                let key = Sha256::digest(serde_json::to_vec(req).expect("requests serialize")).to_vec();
                let n = seen.entry(key).or_insert(0);
                if *n < self.failures_per_request {
                    *n += 1;
                    return Err(500);
                }
            }
            self.answer(req).ok_or(400)
        })
    }
}
