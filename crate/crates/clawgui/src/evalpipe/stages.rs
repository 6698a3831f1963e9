//! Judge, metric and report stages. Each reads files and writes one file;
//! the same inputs always produce the same bytes.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use clawgui_core::eval::{
    compare_official, compute_metrics, judge_sample, ActionTolerance, BenchmarkSample, JudgeResult, MetricReport,
    OfficialCell, Percent, Prediction, ReproductionReport,
};

use super::infer::{sha256_hex, shard_path, sidecar_path};
use super::{io_err, EvalError};

fn format_err(path: &Path, line: usize, e: impl ToString) -> EvalError {
    EvalError::Format { path: path.display().to_string(), line, message: e.to_string() }
}

fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>, EvalError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| format_err(path, i + 1, e)))
        .collect()
}

fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), EvalError> {
    let mut buf = Vec::new();
    for it in items {
        serde_json::to_writer(&mut buf, it).expect("records serialize");
        buf.push(b'\n');
    }
    fs::write(path, buf).map_err(io_err(path))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), EvalError> {
    let mut s = serde_json::to_string_pretty(value).expect("reports serialize");
    s.push('\n');
    fs::write(path, s).map_err(io_err(path))
}

/// Every shard file in `dir`, in shard order, each checked against its
/// sidecar. Shard indices must be contiguous from 0.
pub fn read_predictions(dir: &Path) -> Result<Vec<Prediction>, EvalError> {
    let mut out = Vec::new();
    let mut k = 0;
    while shard_path(dir, k).exists() {
        let path = shard_path(dir, k);
        let bytes = fs::read(&path).map_err(io_err(&path))?;
        let side_path = sidecar_path(dir, k);
        let side = fs::read_to_string(&side_path).map_err(io_err(&side_path))?;
        if side.split_whitespace().next() != Some(sha256_hex(&bytes).as_str()) {
            return Err(format_err(&path, 0, "checksum mismatch with sidecar"));
        }
        out.extend(read_jsonl::<Prediction>(&path)?);
        k += 1;
    }
    if k == 0 {
        return Err(EvalError::Io {
            path: shard_path(dir, 0).display().to_string(),
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "no prediction shards"),
        });
    }
    Ok(out)
}

/// Judge every sample. Predictions are matched by id; a missing one is an
/// error rather than a silent miss, since it means inference is incomplete.
pub fn judge_predictions(
    dataset: &[BenchmarkSample],
    predictions: &[Prediction],
    tolerance: &ActionTolerance,
) -> Result<Vec<JudgeResult>, EvalError> {
    let mut by_id: BTreeMap<&str, &Prediction> = BTreeMap::new();
    let known: std::collections::BTreeSet<&str> = dataset.iter().map(|s| s.sample_id.as_str()).collect();
    for p in predictions {
        if !known.contains(p.sample_id.as_str()) {
            return Err(EvalError::UnknownPrediction(p.sample_id.clone()));
        }
        if by_id.insert(&p.sample_id, p).is_some() {
            return Err(EvalError::DuplicateSample(p.sample_id.clone()));
        }
    }
    dataset
        .iter()
        .map(|s| {
            let p = by_id.get(s.sample_id.as_str()).ok_or_else(|| EvalError::MissingPrediction(s.sample_id.clone()))?;
            let r = judge_sample(s, p, tolerance);
            if let Some(n) = &r.note {
                log::warn!("sample {}: {n}", s.sample_id);
            }
            Ok(r)
        })
        .collect()
}

/// Read shards from `pred_dir`, write `judgments.jsonl` into `out_dir`.
pub fn judge_stage(
    dataset: &[BenchmarkSample],
    pred_dir: &Path,
    tolerance: &ActionTolerance,
    out_dir: &Path,
) -> Result<Vec<JudgeResult>, EvalError> {
    let preds = read_predictions(pred_dir)?;
    let results = judge_predictions(dataset, &preds, tolerance)?;
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    write_jsonl(&out_dir.join("judgments.jsonl"), &results)?;
    Ok(results)
}

/// Read `judgments.jsonl`, write `metrics.json`.
pub fn metric_stage(dataset: &[BenchmarkSample], judgments: &Path, out_dir: &Path) -> Result<MetricReport, EvalError> {
    let results: Vec<JudgeResult> = read_jsonl(judgments)?;
    let report = compute_metrics(&results, dataset)?;
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    write_json(&out_dir.join("metrics.json"), &report)?;
    Ok(report)
}

/// One row of the shipped score table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableCell {
    pub model: String,
    pub benchmark: String,
    #[serde(default)]
    pub official: Option<Percent>,
    #[serde(default)]
    pub reproduced: Option<Percent>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OfficialTable {
    #[serde(rename = "cell")]
    pub cells: Vec<TableCell>,
}

impl OfficialTable {
    pub fn official_cells(&self) -> Vec<OfficialCell> {
        self.cells
            .iter()
            .map(|c| OfficialCell { model: c.model.clone(), benchmark: c.benchmark.clone(), official: c.official })
            .collect()
    }

    /// `(model, benchmark, score)` for every cell carrying a reproduced score.
    pub fn reproduced(&self) -> Vec<(String, String, Percent)> {
        self.cells
            .iter()
            .filter_map(|c| c.reproduced.map(|r| (c.model.clone(), c.benchmark.clone(), r)))
            .collect()
    }
}

/// The score table that ships with the crate.
pub const BUNDLED_TABLE: &str = include_str!("../../data/reproduction_table.toml");

pub fn parse_official_table(text: &str, origin: &str) -> Result<OfficialTable, EvalError> {
    let t: OfficialTable = toml::from_str(text)
        .map_err(|e| EvalError::Format { path: origin.to_string(), line: 0, message: e.to_string() })?;
    let mut seen = std::collections::BTreeSet::new();
    for c in &t.cells {
        if !seen.insert((c.model.as_str(), c.benchmark.as_str())) {
            return Err(EvalError::Format {
                path: origin.to_string(),
                line: 0,
                message: format!("duplicate cell {} / {}", c.model, c.benchmark),
            });
        }
    }
    Ok(t)
}

/// Load a table file, or the bundled one when `path` is `None`.
pub fn load_official_table(path: Option<&Path>) -> Result<OfficialTable, EvalError> {
    match path {
        Some(p) => parse_official_table(&fs::read_to_string(p).map_err(io_err(p))?, &p.display().to_string()),
        None => parse_official_table(BUNDLED_TABLE, "bundled table"),
    }
}

/// Compare scores against the official table and write `reproduction.json`.
/// `scores` overrides or extends the table's own reproduced column.
pub fn report_stage(
    table: &OfficialTable,
    scores: &[(String, String, Percent)],
    out_dir: &Path,
) -> Result<ReproductionReport, EvalError> {
    let mut rows = table.reproduced();
    for (m, b, s) in scores {
        match rows.iter_mut().find(|(rm, rb, _)| rm == m && rb == b) {
            Some(r) => r.2 = *s,
            None => rows.push((m.clone(), b.clone(), *s)),
        }
    }
    let report = compare_official(&rows, &table.official_cells());
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    write_json(&out_dir.join("reproduction.json"), &report)?;
    Ok(report)
}
