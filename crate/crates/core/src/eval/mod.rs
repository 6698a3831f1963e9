//! Evaluation-side primitives: benchmark records, pinned model profiles,
//! output parsing, the three judge families, metric aggregation, the
//! reproduction comparator and zoom crop arithmetic.
//!
//! File IO, inference and the HTTP endpoint live in the `clawgui` crate.

mod judge;
mod metric;
mod parse;
mod profile;
mod reproduction;
mod sample;
mod zoom;

pub use judge::{
    judge_multi_action, judge_point_in_box, judge_polygon_refusal, judge_sample, point_in_polygon, JudgeReason,
    JudgeResult, MultiActionError,
};
pub use metric::{compute_metrics, MetricError, MetricReport, Percent, SliceMetric};
pub use parse::parse_output;
pub use profile::{ActionTolerance, CoordinateConvention, ModelProfile, ParserId, ZoomConfig};
pub use reproduction::{compare_official, verdict, OfficialCell, ReproductionReport, ReproductionRow, Verdict};
pub use sample::{ActionRecord, ActionType, BenchmarkSample, GroundTruth, Parsed, Prediction, SampleError};
pub use zoom::{crop_rect, inverse_remap, remap, CropRect, ZoomError};
