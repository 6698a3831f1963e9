//! Synthetic grounding benchmark with known ground truth.
//!
//! Each image has a white background, a few gray distractor boxes and at
//! most one solid red target. Box targets paint every pixel of the
//! inclusive rectangle; polygon targets paint exactly the pixels the
//! polygon judge counts as inside. Refusal samples have no target.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use image::{Rgb, RgbImage};
use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};

use clawgui_core::digest::unit_f64;
use clawgui_core::eval::{point_in_polygon, BenchmarkSample, GroundTruth};
use clawgui_core::geometry::{Point, Rect};

use super::{io_err, write_dataset, EvalError};

pub const TARGET: Rgb<u8> = Rgb([220, 30, 30]);
pub const DISTRACTOR: Rgb<u8> = Rgb([128, 128, 128]);
const BACKGROUND: Rgb<u8> = Rgb([255, 255, 255]);

/// Strongly red pixels count as target.
pub fn is_target(p: &Rgb<u8>) -> bool {
    p[0] >= 180 && p[1] <= 80 && p[2] <= 80
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchGenConfig {
    pub samples: usize,
    pub width: u32,
    pub height: u32,
    pub seed: u64,
    pub polygon_fraction: f64,
    pub refusal_fraction: f64,
    pub distractors: u32,
    /// Target extent range in pixels.
    pub min_size: u32,
    pub max_size: u32,
}

impl Default for BenchGenConfig {
    fn default() -> Self {
        Self {
            samples: 100,
            width: 640,
            height: 400,
            seed: 0,
            polygon_fraction: 0.3,
            refusal_fraction: 0.1,
            distractors: 4,
            min_size: 24,
            max_size: 72,
        }
    }
}

impl BenchGenConfig {
    pub fn validate(&self, prefix: &str, errors: &mut Vec<String>) {
        if self.samples == 0 {
            errors.push(format!("{prefix}.samples must be at least 1"));
        }
        if self.min_size < 8 || self.min_size > self.max_size {
            errors.push(format!("{prefix}: need 8 <= min_size <= max_size"));
        }
        if self.width < self.max_size * 2 || self.height < self.max_size * 2 {
            errors.push(format!("{prefix}: image must be at least twice max_size on each side"));
        }
        for (name, v) in [("polygon_fraction", self.polygon_fraction), ("refusal_fraction", self.refusal_fraction)] {
            if !(0.0..=1.0).contains(&v) {
                errors.push(format!("{prefix}.{name} must lie in [0, 1]"));
            }
        }
        if self.polygon_fraction + self.refusal_fraction > 1.0 {
            errors.push(format!("{prefix}: polygon_fraction + refusal_fraction exceeds 1"));
        }
    }
}

struct Draw(ChaCha8Rng);

impl Draw {
    fn unit(&mut self) -> f64 {
        unit_f64(self.0.next_u64())
    }

    /// Integer in `lo..=hi`.
    fn int(&mut self, lo: u32, hi: u32) -> u32 {
        lo + (self.unit() * f64::from(hi - lo + 1)) as u32
    }
}

fn fill_rect(img: &mut RgbImage, r: Rect, color: Rgb<u8>) {
    for y in r.y1..=r.y2 {
        for x in r.x1..=r.x2 {
            img.put_pixel(x as u32, y as u32, color);
        }
    }
}

/// Star-shaped polygon around `c`; alternating radii make most of them
/// concave.
fn star(d: &mut Draw, c: Point, r: f64, dims: (u32, u32)) -> Vec<Point> {
    let n = d.int(5, 8);
    (0..n)
        .map(|i| {
            let a = std::f64::consts::TAU * (f64::from(i) + 0.3 * d.unit()) / f64::from(n);
            let rr = if i % 2 == 0 { r } else { r * (0.45 + 0.5 * d.unit()) };
            let x = (f64::from(c.x) + rr * a.cos()).round().clamp(0.0, f64::from(dims.0 - 1));
            let y = (f64::from(c.y) + rr * a.sin()).round().clamp(0.0, f64::from(dims.1 - 1));
            Point::new(x as i32, y as i32)
        })
        .collect()
}

fn fill_polygon(img: &mut RgbImage, vertices: &[Point]) -> usize {
    let (x1, x2) = (vertices.iter().map(|p| p.x).min().unwrap_or(0), vertices.iter().map(|p| p.x).max().unwrap_or(0));
    let (y1, y2) = (vertices.iter().map(|p| p.y).min().unwrap_or(0), vertices.iter().map(|p| p.y).max().unwrap_or(0));
    let mut painted = 0;
    for y in y1..=y2 {
        for x in x1..=x2 {
            if point_in_polygon(Point::new(x, y), vertices) {
                img.put_pixel(x as u32, y as u32, TARGET);
                painted += 1;
            }
        }
    }
    painted
}

const PLATFORMS: [&str; 3] = ["mobile", "desktop", "web"];

/// Generate samples and images under `out_dir`: `images/<id>.png` and
/// `dataset.jsonl`.
pub fn generate(cfg: &BenchGenConfig, out_dir: &Path) -> Result<Vec<BenchmarkSample>, EvalError> {
    let mut errors = Vec::new();
    cfg.validate("bench", &mut errors);
    if !errors.is_empty() {
        return Err(EvalError::Config(errors.join("; ")));
    }
    let img_dir = out_dir.join("images");
    fs::create_dir_all(&img_dir).map_err(io_err(&img_dir))?;
    let mut d = Draw(ChaCha8Rng::seed_from_u64(cfg.seed));
    let (w, h) = (cfg.width, cfg.height);
    let mut samples = Vec::with_capacity(cfg.samples);
    for i in 0..cfg.samples {
        let id = format!("s{i:04}");
        let mut img = RgbImage::from_pixel(w, h, BACKGROUND);
        for _ in 0..cfg.distractors {
            let (bw, bh) = (d.int(cfg.min_size, cfg.max_size), d.int(cfg.min_size / 2, cfg.max_size / 2));
            let x = d.int(0, w - 1 - bw) as i32;
            let y = d.int(0, h - 1 - bh) as i32;
            fill_rect(&mut img, Rect::new(x, y, x + bw as i32, y + bh as i32), DISTRACTOR);
        }
        let u = d.unit();
        let mut categories = BTreeMap::new();
        categories.insert("platform".to_string(), PLATFORMS[i % PLATFORMS.len()].to_string());
        let (ground_truth, element, task) = if u < cfg.refusal_fraction {
            (GroundTruth::Refusal, "none", "refusal")
        } else if u < cfg.refusal_fraction + cfg.polygon_fraction {
            let r = f64::from(d.int(cfg.min_size, cfg.max_size)) / 2.0;
            let m = cfg.max_size / 2 + 1;
            let c = Point::new(d.int(m, w - 1 - m) as i32, d.int(m, h - 1 - m) as i32);
            let vertices = star(&mut d, c, r, (w, h));
            fill_polygon(&mut img, &vertices);
            (GroundTruth::Polygon { vertices }, "icon", "grounding")
        } else {
            let (bw, bh) = (d.int(cfg.min_size, cfg.max_size), d.int(cfg.min_size / 2, cfg.max_size / 2));
            let x = d.int(0, w - 1 - bw) as i32;
            let y = d.int(0, h - 1 - bh) as i32;
            let bbox = Rect::new(x, y, x + bw as i32, y + bh as i32);
            fill_rect(&mut img, bbox, TARGET);
            let element = if bw > 2 * bh { "text" } else { "icon" };
            (GroundTruth::Bbox { bbox }, element, "grounding")
        };
        categories.insert("element_type".to_string(), element.to_string());
        categories.insert("task_category".to_string(), task.to_string());
        let image_ref = format!("images/{id}.png");
        let path = out_dir.join(&image_ref);
        img.save(&path).map_err(|e| EvalError::Image { path: path.display().to_string(), message: e.to_string() })?;
        let sample = BenchmarkSample {
            sample_id: id.clone(),
            image_ref,
            image_dims: (w, h),
            instruction: format!("Select the red {} marked {id}", if element == "none" { "element" } else { element }),
            ground_truth,
            categories,
        };
        sample.validate()?;
        samples.push(sample);
    }
    write_dataset(&out_dir.join("dataset.jsonl"), &samples)?;
    Ok(samples)
}
