//! Sharded, resumable inference.
//!
//! The dataset is cut into `shard_count` contiguous shards. Workers pull
//! shard indices from a shared counter and write `pred.shard-<k>.jsonl`
//! through a temp file and a rename, then a `.sha256` sidecar the same way.
//! On resume a shard is skipped only when its sidecar matches its bytes and
//! it holds exactly the shard's sample ids; anything else is recomputed.

use std::collections::BTreeSet;
use std::fs;
use std::io::Cursor;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use base64::Engine;
use image::imageops::FilterType;
use image::{DynamicImage, GenericImageView, ImageFormat};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use clawgui_core::digest::to_hex;
use clawgui_core::eval::{
    crop_rect, parse_output, remap, BenchmarkSample, CoordinateConvention, CropRect, ModelProfile, Parsed, ParserId,
    Prediction,
};
use clawgui_core::geometry::Point;

use super::{io_err, EvalError};
use crate::wire::{ChatMessage, ChatRequest, EndpointClient};

/// Prefix on stage-1 zoom prompts. Endpoints may ignore it.
pub const COARSE_MARKER: &str = "[coarse]";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InferConfig {
    pub shard_count: usize,
    pub worker_count: usize,
    pub resume: bool,
    /// Restrict this invocation to these shard indices. Used to stop a run
    /// part-way (tests, manual reruns); `None` processes every shard.
    pub only_shards: Option<BTreeSet<usize>>,
    pub max_tokens: u32,
}

impl Default for InferConfig {
    fn default() -> Self {
        Self { shard_count: 4, worker_count: 4, resume: true, only_shards: None, max_tokens: 128 }
    }
}

impl InferConfig {
    pub fn validate(&self, prefix: &str, errors: &mut Vec<String>) {
        if self.shard_count == 0 {
            errors.push(format!("{prefix}.shard_count must be at least 1"));
        }
        if self.worker_count == 0 {
            errors.push(format!("{prefix}.worker_count must be at least 1"));
        }
        if let Some(bad) = self.only_shards.as_ref().and_then(|s| s.iter().find(|&&k| k >= self.shard_count)) {
            errors.push(format!("{prefix}.only_shards contains {bad}, beyond shard_count {}", self.shard_count));
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct InferSummary {
    pub computed: Vec<usize>,
    pub skipped: Vec<usize>,
    /// Shards that existed on resume but failed verification.
    pub recomputed: Vec<usize>,
    pub predictions: usize,
    pub parse_failures: usize,
}

/// Sample index range of shard `k`.
pub fn shard_range(n: usize, shard_count: usize, k: usize) -> std::ops::Range<usize> {
    (k * n / shard_count)..((k + 1) * n / shard_count)
}

pub fn shard_path(dir: &Path, k: usize) -> PathBuf {
    dir.join(format!("pred.shard-{k}.jsonl"))
}

pub fn sidecar_path(dir: &Path, k: usize) -> PathBuf {
    dir.join(format!("pred.shard-{k}.jsonl.sha256"))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    to_hex(&Sha256::digest(bytes))
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), EvalError> {
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = path.with_file_name(format!(".{name}.tmp-{}-{:?}", std::process::id(), std::thread::current().id()));
    fs::write(&tmp, bytes).map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))
}

/// Shard bytes when the shard file and its sidecar agree and the file
/// holds exactly `ids` in order.
pub fn verified_shard(dir: &Path, k: usize, ids: &[&str]) -> Option<Vec<u8>> {
    let bytes = fs::read(shard_path(dir, k)).ok()?;
    let side = fs::read_to_string(sidecar_path(dir, k)).ok()?;
    if side.split_whitespace().next()? != sha256_hex(&bytes) {
        return None;
    }
    let text = std::str::from_utf8(&bytes).ok()?;
    let got: Option<Vec<String>> =
        text.lines().map(|l| serde_json::from_str::<Prediction>(l).ok().map(|p| p.sample_id)).collect();
    (got? == ids).then_some(bytes)
}

fn encode_png(img: &DynamicImage) -> Vec<u8> {
    let mut buf = Cursor::new(Vec::new());
    img.write_to(&mut buf, ImageFormat::Png).expect("in-memory PNG encoding");
    buf.into_inner()
}

/// Downscale to fit `max_pixels`, keeping the aspect ratio. Nearest-neighbour
/// so small solid targets keep their colour.
fn fit(img: &DynamicImage, max_pixels: u64) -> DynamicImage {
    let (w, h) = img.dimensions();
    let px = u64::from(w) * u64::from(h);
    if px <= max_pixels || max_pixels == 0 {
        return img.clone();
    }
    let s = (max_pixels as f64 / px as f64).sqrt();
    let nw = ((f64::from(w) * s).floor() as u32).max(1);
    let nh = ((f64::from(h) * s).floor() as u32).max(1);
    img.resize_exact(nw, nh, FilterType::Nearest)
}

fn data_url(png: &[u8]) -> String {
    format!("data:image/png;base64,{}", base64::engine::general_purpose::STANDARD.encode(png))
}

pub fn render_prompt(profile: &ModelProfile, instruction: &str, coarse: bool) -> Result<String, EvalError> {
    let conv = match profile.coordinate_convention {
        CoordinateConvention::Normalized0_1000 => "with x and y normalized to 0-1000",
        CoordinateConvention::AbsolutePixels => "in image pixels",
    };
    let body = match profile.prompt_template_id.as_str() {
        "grounding_v1" => format!(
            "Locate the element described below and reply with its point as (x, y) {conv}. \
             If it is not on screen, reply {}.\nInstruction: {instruction}",
            profile.refusal_token
        ),
        "action_v1" => format!(
            "Reply with one action call: click(x, y) {conv}, type(\"text\"), scroll(up|down|left|right), \
             back() or done(). If the target is not on screen, reply {}.\nInstruction: {instruction}",
            profile.refusal_token
        ),
        other => return Err(EvalError::Config(format!("unknown prompt template {other:?}"))),
    };
    Ok(if coarse { format!("{COARSE_MARKER} {body}") } else { body })
}

/// Template ids `render_prompt` understands.
pub const PROMPT_TEMPLATES: [&str; 2] = ["grounding_v1", "action_v1"];

fn scale_point(p: Point, from: (u32, u32), to: (u32, u32)) -> Point {
    if from == to {
        return p;
    }
    let sx = f64::from(to.0) / f64::from(from.0);
    let sy = f64::from(to.1) / f64::from(from.1);
    Point::new(
        ((f64::from(p.x) * sx).round() as i32).min(to.0 as i32),
        ((f64::from(p.y) * sy).round() as i32).min(to.1 as i32),
    )
}

/// Parse output produced for an image of `sent` dims that stands for a
/// region of `target` dims. Normalized coordinates convert straight to the
/// target; absolute ones are rescaled.
fn parse_scaled(raw: &str, profile: &ModelProfile, sent: (u32, u32), target: (u32, u32)) -> Parsed {
    match profile.coordinate_convention {
        CoordinateConvention::Normalized0_1000 => parse_output(raw, profile, target),
        CoordinateConvention::AbsolutePixels => match parse_output(raw, profile, sent) {
            Parsed::Point { point } => Parsed::Point { point: scale_point(point, sent, target) },
            Parsed::Action { mut action } => {
                for p in [&mut action.point, &mut action.start, &mut action.end].into_iter().flatten() {
                    *p = scale_point(*p, sent, target);
                }
                Parsed::Action { action }
            }
            other => other,
        },
    }
}

fn map_parsed(parsed: Parsed, f: impl Fn(Point) -> Point) -> Parsed {
    match parsed {
        Parsed::Point { point } => Parsed::Point { point: f(point) },
        Parsed::Action { mut action } => {
            for p in [&mut action.point, &mut action.start, &mut action.end].into_iter().flatten() {
                *p = f(*p);
            }
            Parsed::Action { action }
        }
        other => other,
    }
}

fn load_image(root: &Path, sample: &BenchmarkSample) -> Result<DynamicImage, EvalError> {
    let path = root.join(&sample.image_ref);
    let img = image::open(&path)
        .map_err(|e| EvalError::Image { path: path.display().to_string(), message: e.to_string() })?;
    if img.dimensions() != sample.image_dims {
        return Err(EvalError::Image {
            path: path.display().to_string(),
            message: format!("dimensions {:?} differ from declared {:?}", img.dimensions(), sample.image_dims),
        });
    }
    Ok(img)
}

struct Call {
    raw: Option<String>,
    parsed: Parsed,
}

fn ask(
    client: &EndpointClient,
    profile: &ModelProfile,
    cfg: &InferConfig,
    img: &DynamicImage,
    instruction: &str,
    coarse: bool,
) -> Result<Call, EvalError> {
    let target = img.dimensions();
    let sent = fit(img, profile.max_pixels);
    let request = ChatRequest {
        model: profile.model_id.clone(),
        messages: vec![ChatMessage::user_with_image(
            render_prompt(profile, instruction, coarse)?,
            data_url(&encode_png(&sent)),
        )],
        temperature: Some(profile.temperature),
        max_tokens: Some(cfg.max_tokens),
    };
    Ok(match client.call(&request) {
        Ok(c) => {
            let raw = c.text().to_string();
            let parsed = parse_scaled(&raw, profile, sent.dimensions(), target);
            Call { raw: Some(raw), parsed }
        }
        Err(e) => {
            log::warn!("endpoint failed for {instruction:?}: {e}; recording a parse failure");
            Call { raw: None, parsed: Parsed::ParseFailure }
        }
    })
}

/// One sample through single-stage or zoom grounding.
pub fn predict_sample(
    client: &EndpointClient,
    profile: &ModelProfile,
    cfg: &InferConfig,
    image_root: &Path,
    sample: &BenchmarkSample,
) -> Result<Prediction, EvalError> {
    let img = load_image(image_root, sample)?;
    let single = |stage_outputs: Vec<String>| -> Result<Prediction, EvalError> {
        let c = ask(client, profile, cfg, &img, &sample.instruction, false)?;
        let mut outs = stage_outputs;
        outs.extend(c.raw.clone());
        Ok(Prediction {
            sample_id: sample.sample_id.clone(),
            raw_output: c.raw.unwrap_or_default(),
            parsed: c.parsed,
            stage_outputs: outs,
        })
    };
    let Some(f) = profile.zoom_fraction().filter(|_| profile.parser_id == ParserId::Point) else {
        return single(Vec::new());
    };
    let coarse = ask(client, profile, cfg, &img, &sample.instruction, true)?;
    let outs: Vec<String> = coarse.raw.iter().cloned().collect();
    let point = match coarse.parsed {
        Parsed::Point { point } => point,
        Parsed::Refusal => {
            return Ok(Prediction {
                sample_id: sample.sample_id.clone(),
                raw_output: coarse.raw.unwrap_or_default(),
                parsed: Parsed::Refusal,
                stage_outputs: outs,
            })
        }
        _ => return single(outs),
    };
    let crop = crop_rect(sample.image_dims, point, f).map_err(|e| EvalError::Config(e.to_string()))?;
    let full = CropRect { x: 0, y: 0, w: sample.image_dims.0, h: sample.image_dims.1 };
    let tile = if crop == full { img.clone() } else { img.crop_imm(crop.x, crop.y, crop.w, crop.h) };
    let fine = ask(client, profile, cfg, &tile, &sample.instruction, false)?;
    let mut stage_outputs = outs;
    stage_outputs.extend(fine.raw.clone());
    // A tile covering the whole image is the single-stage request; keep its
    // answer unchanged.
    let parsed = if crop == full { fine.parsed } else { map_parsed(fine.parsed, |p| remap(&crop, p)) };
    Ok(Prediction { sample_id: sample.sample_id.clone(), raw_output: fine.raw.unwrap_or_default(), parsed, stage_outputs })
}

fn shard_bytes(preds: &[Prediction]) -> Vec<u8> {
    let mut buf = Vec::new();
    for p in preds {
        serde_json::to_writer(&mut buf, p).expect("predictions serialize");
        buf.push(b'\n');
    }
    buf
}

/// Run inference over `dataset`, writing shard files into `out_dir`.
pub fn infer(
    dataset: &[BenchmarkSample],
    image_root: &Path,
    profile: &ModelProfile,
    client: &EndpointClient,
    cfg: &InferConfig,
    out_dir: &Path,
) -> Result<InferSummary, EvalError> {
    let mut errors = Vec::new();
    cfg.validate("infer", &mut errors);
    if !PROMPT_TEMPLATES.contains(&profile.prompt_template_id.as_str()) {
        errors.push(format!("unknown prompt template {:?}", profile.prompt_template_id));
    }
    if !errors.is_empty() {
        return Err(EvalError::Config(errors.join("; ")));
    }
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;

    let wanted: Vec<usize> =
        (0..cfg.shard_count).filter(|k| cfg.only_shards.as_ref().is_none_or(|s| s.contains(k))).collect();
    let summary = Mutex::new(InferSummary::default());
    let mut todo = Vec::new();
    for &k in &wanted {
        let ids: Vec<&str> =
            dataset[shard_range(dataset.len(), cfg.shard_count, k)].iter().map(|s| s.sample_id.as_str()).collect();
        let exists = shard_path(out_dir, k).exists();
        if cfg.resume && verified_shard(out_dir, k, &ids).is_some() {
            log::info!("shard {k}: verified, skipping");
            summary.lock().expect("summary lock").skipped.push(k);
            continue;
        }
        if cfg.resume && exists {
            log::warn!("shard {k}: checksum or content mismatch, recomputing");
            summary.lock().expect("summary lock").recomputed.push(k);
        }
        todo.push(k);
    }

    let next = AtomicUsize::new(0);
    let failure: Mutex<Option<EvalError>> = Mutex::new(None);
    let workers = cfg.worker_count.min(todo.len()).max(1);
    std::thread::scope(|s| {
        for w in 0..workers {
            let (next, todo, failure, summary) = (&next, &todo, &failure, &summary);
            s.spawn(move || loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(&k) = todo.get(i) else { break };
                if failure.lock().expect("failure lock").is_some() {
                    break;
                }
                let run = || -> Result<Vec<Prediction>, EvalError> {
                    dataset[shard_range(dataset.len(), cfg.shard_count, k)]
                        .iter()
                        .map(|smp| predict_sample(client, profile, cfg, image_root, smp))
                        .collect()
                };
                let result = run().and_then(|preds| {
                    let bytes = shard_bytes(&preds);
                    write_atomic(&shard_path(out_dir, k), &bytes)?;
                    let side = format!("{}  pred.shard-{k}.jsonl\n", sha256_hex(&bytes));
                    write_atomic(&sidecar_path(out_dir, k), side.as_bytes())?;
                    Ok(preds)
                });
                match result {
                    Ok(preds) => {
                        log::info!("worker {w}: shard {k} done ({} predictions)", preds.len());
                        let mut sm = summary.lock().expect("summary lock");
                        sm.computed.push(k);
                        sm.parse_failures += preds.iter().filter(|p| p.parsed == Parsed::ParseFailure).count();
                    }
                    Err(e) => {
                        failure.lock().expect("failure lock").get_or_insert(e);
                        break;
                    }
                }
            });
        }
    });
    if let Some(e) = failure.into_inner().expect("failure lock") {
        return Err(e);
    }
    let mut sm = summary.into_inner().expect("summary lock");
    sm.computed.sort_unstable();
    sm.skipped.sort_unstable();
    sm.predictions =
        sm.computed.iter().chain(&sm.skipped).map(|&k| shard_range(dataset.len(), cfg.shard_count, k).len()).sum();
    Ok(sm)
}
