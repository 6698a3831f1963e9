use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use core::fmt;
use core::str::FromStr;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::judge::JudgeResult;
use super::sample::BenchmarkSample;

/// A percentage held as integer hundredths, so 95.83% is `Percent(9583)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Percent(pub u32);

impl Percent {
    pub const fn from_hundredths(h: u32) -> Self {
        Percent(h)
    }

    pub const fn hundredths(self) -> u32 {
        self.0
    }

    /// `num / den` as a percentage, rounded half-up to two decimals.
    pub fn ratio(num: u64, den: u64) -> Option<Self> {
        if den == 0 || num > den {
            return None;
        }
        let scaled = u128::from(num) * 10_000 * 2 + u128::from(den);
        Some(Percent((scaled / (u128::from(den) * 2)) as u32))
    }

    /// One-decimal rendering, rounded half-up: 95.83 → "95.8".
    pub fn one_decimal(self) -> String {
        let tenths = (self.0 + 5) / 10;
        format!("{}.{}", tenths / 10, tenths % 10)
    }

    pub fn as_f64(self) -> f64 {
        f64::from(self.0) / 100.0
    }
}

impl fmt::Display for Percent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{:02}", self.0 / 100, self.0 % 100)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid percent {0:?}: expected up to two decimals, e.g. \"47.50\"")]
pub struct PercentParseError(pub String);

impl FromStr for Percent {
    type Err = PercentParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || PercentParseError(s.to_string());
        let s = s.trim();
        let (int, frac) = s.split_once('.').unwrap_or((s, ""));
        if int.is_empty() || frac.len() > 2 || !int.bytes().chain(frac.bytes()).all(|b| b.is_ascii_digit()) {
            return Err(err());
        }
        let int: u32 = int.parse().map_err(|_| err())?;
        let mut f: u32 = if frac.is_empty() { 0 } else { frac.parse().map_err(|_| err())? };
        if frac.len() == 1 {
            f *= 10;
        }
        int.checked_mul(100).and_then(|v| v.checked_add(f)).map(Percent).ok_or_else(err)
    }
}

impl Serialize for Percent {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Percent {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MetricError {
    #[error("sample {0} has no judge result")]
    MissingJudgeResult(String),
    #[error("sample {0} was judged more than once")]
    DuplicateJudgeResult(String),
    #[error("judge result for unknown sample {0}")]
    UnknownSample(String),
    #[error("dataset is empty")]
    EmptyDataset,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SliceMetric {
    pub correct: u64,
    pub total: u64,
    pub accuracy: Percent,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricReport {
    pub overall: SliceMetric,
    /// axis → category value → accuracy. Slices with no samples are absent.
    pub breakdowns: BTreeMap<String, BTreeMap<String, SliceMetric>>,
}

#[derive(Default)]
struct Tally {
    correct: u64,
    total: u64,
}

impl Tally {
    fn add(&mut self, ok: bool) {
        self.total += 1;
        self.correct += u64::from(ok);
    }

    fn finish(&self) -> SliceMetric {
        SliceMetric {
            correct: self.correct,
            total: self.total,
            accuracy: Percent::ratio(self.correct, self.total).unwrap_or_default(),
        }
    }
}

/// Aggregate judge results over the dataset. Every sample must be judged
/// exactly once.
pub fn compute_metrics(results: &[JudgeResult], dataset: &[BenchmarkSample]) -> Result<MetricReport, MetricError> {
    if dataset.is_empty() {
        return Err(MetricError::EmptyDataset);
    }
    let known: BTreeSet<&str> = dataset.iter().map(|s| s.sample_id.as_str()).collect();
    let mut by_id: BTreeMap<&str, bool> = BTreeMap::new();
    for r in results {
        if !known.contains(r.sample_id.as_str()) {
            return Err(MetricError::UnknownSample(r.sample_id.clone()));
        }
        if by_id.insert(r.sample_id.as_str(), r.correct).is_some() {
            return Err(MetricError::DuplicateJudgeResult(r.sample_id.clone()));
        }
    }
    let mut overall = Tally::default();
    let mut slices: BTreeMap<&str, BTreeMap<&str, Tally>> = BTreeMap::new();
    for s in dataset {
        let ok = *by_id
            .get(s.sample_id.as_str())
            .ok_or_else(|| MetricError::MissingJudgeResult(s.sample_id.clone()))?;
        overall.add(ok);
        for (axis, value) in &s.categories {
            slices.entry(axis).or_default().entry(value).or_default().add(ok);
        }
    }
    let breakdowns = slices
        .into_iter()
        .map(|(axis, values)| {
            let m = values.into_iter().map(|(v, t)| (v.to_string(), t.finish())).collect();
            (axis.to_string(), m)
        })
        .collect();
    Ok(MetricReport { overall: overall.finish(), breakdowns })
}
