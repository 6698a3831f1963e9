use alloc::string::String;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use super::metric::Percent;

/// Largest absolute gap, in hundredths of a point, still counted as a
/// successful reproduction.
pub const REPRODUCTION_MARGIN: u32 = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    NoBaseline,
}

/// Pass iff the reproduced score meets the official one or lies within two
/// points of it.
pub fn verdict(reproduced: Percent, official: Option<Percent>) -> Verdict {
    let Some(off) = official else { return Verdict::NoBaseline };
    if reproduced >= off || off.hundredths() - reproduced.hundredths() <= REPRODUCTION_MARGIN {
        Verdict::Pass
    } else {
        Verdict::Fail
    }
}

/// One cell of an official score table. `official` is absent when the
/// model's authors never published a number for that benchmark.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OfficialCell {
    pub model: String,
    pub benchmark: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub official: Option<Percent>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReproductionRow {
    pub model: String,
    pub benchmark: String,
    pub official: Option<Percent>,
    pub reproduced: Percent,
    /// reproduced − official, in hundredths.
    pub delta_hundredths: Option<i64>,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReproductionReport {
    pub rows: Vec<ReproductionRow>,
    pub pass: usize,
    pub fail: usize,
    pub no_baseline: usize,
    /// pass / (pass + fail); absent when nothing had a baseline.
    pub rate: Option<Percent>,
    pub rate_display: Option<String>,
}

/// Compare reproduced `(model, benchmark, score)` triples against an
/// official table. Rows keep the order of `reproduced`.
pub fn compare_official(reproduced: &[(String, String, Percent)], official: &[OfficialCell]) -> ReproductionReport {
    let mut rows = Vec::with_capacity(reproduced.len());
    let (mut pass, mut fail, mut no_baseline) = (0, 0, 0);
    for (model, benchmark, score) in reproduced {
        let off = official
            .iter()
            .find(|c| &c.model == model && &c.benchmark == benchmark)
            .and_then(|c| c.official);
        let v = verdict(*score, off);
        match v {
            Verdict::Pass => pass += 1,
            Verdict::Fail => fail += 1,
            Verdict::NoBaseline => no_baseline += 1,
        }
        rows.push(ReproductionRow {
            model: model.clone(),
            benchmark: benchmark.clone(),
            official: off,
            reproduced: *score,
            delta_hundredths: off.map(|o| i64::from(score.hundredths()) - i64::from(o.hundredths())),
            verdict: v,
        });
    }
    let rate = Percent::ratio(pass as u64, (pass + fail) as u64);
    ReproductionReport { rows, pass, fail, no_baseline, rate, rate_display: rate.map(Percent::one_decimal) }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(s: &str) -> Percent {
        s.parse().unwrap()
    }

    #[test]
    fn verdict_examples() {
        assert_eq!(verdict(p("47.75"), Some(p("47.50"))), Verdict::Pass);
        assert_eq!(verdict(p("43.90"), Some(p("48.50"))), Verdict::Fail);
        assert_eq!(verdict(p("56.36"), Some(p("57.80"))), Verdict::Pass);
        assert_eq!(verdict(p("55.80"), Some(p("57.80"))), Verdict::Pass);
        assert_eq!(verdict(p("55.79"), Some(p("57.80"))), Verdict::Fail);
        assert_eq!(verdict(p("88.40"), None), Verdict::NoBaseline);
    }
}
