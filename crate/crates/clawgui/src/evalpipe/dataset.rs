//! Line-delimited benchmark files, one `BenchmarkSample` per line.

use std::collections::BTreeSet;
use std::fs;
use std::io::Write;
use std::path::Path;

use clawgui_core::eval::BenchmarkSample;

use super::{io_err, EvalError};

/// Load and validate a dataset. Blank lines are skipped; sample ids must be
/// unique.
pub fn load_dataset(path: &Path) -> Result<Vec<BenchmarkSample>, EvalError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let s: BenchmarkSample = serde_json::from_str(line).map_err(|e| EvalError::Format {
            path: path.display().to_string(),
            line: i + 1,
            message: e.to_string(),
        })?;
        s.validate()?;
        if !seen.insert(s.sample_id.clone()) {
            return Err(EvalError::DuplicateSample(s.sample_id));
        }
        out.push(s);
    }
    Ok(out)
}

pub fn write_dataset(path: &Path, samples: &[BenchmarkSample]) -> Result<(), EvalError> {
    let mut buf = Vec::new();
    for s in samples {
        serde_json::to_writer(&mut buf, s).expect("samples serialize");
        buf.push(b'\n');
    }
    let mut f = fs::File::create(path).map_err(io_err(path))?;
    f.write_all(&buf).map_err(io_err(path))
}
