use std::collections::BTreeMap;

use clawgui_core::eval::{
    compare_official, compute_metrics, crop_rect, inverse_remap, judge_point_in_box, parse_output, point_in_polygon,
    remap, verdict, ActionTolerance, BenchmarkSample, CoordinateConvention, GroundTruth, JudgeReason, JudgeResult,
    ModelProfile, OfficialCell, Parsed, ParserId, Percent, Verdict,
};
use clawgui_core::geometry::{Point, Rect};
use proptest::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

/// Boundary by exact collinearity, interior by crossing parity of an
/// upward vertical ray (the crate casts horizontally).
fn inside_oracle(p: Point, poly: &[Point]) -> bool {
    let n = poly.len();
    let (px, py) = (i64::from(p.x), i64::from(p.y));
    let mut crossings = 0;
    for i in 0..n {
        let (a, b) = (poly[i], poly[(i + 1) % n]);
        let (ax, ay, bx, by) = (i64::from(a.x), i64::from(a.y), i64::from(b.x), i64::from(b.y));
        let cross = (bx - ax) * (py - ay) - (by - ay) * (px - ax);
        if cross == 0 && ax.min(bx) <= px && px <= ax.max(bx) && ay.min(by) <= py && py <= ay.max(by) {
            return true;
        }
        // Half-open in x; the ray goes towards smaller y.
        if (ax <= px) != (bx <= px) {
            let y_at = ay as f64 + (px - ax) as f64 * (by - ay) as f64 / (bx - ax) as f64;
            if y_at < py as f64 {
                crossings += 1;
            }
        }
    }
    crossings % 2 == 1
}

#[test]
fn polygon_judge_matches_a_second_ray_direction() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut r = |n: u64| (rng.next_u64() % n) as i32;
    let mut checked = 0;
    for k in 0..10 {
        // Half simple stars, half arbitrary (often self-intersecting).
        let nv = 3 + r(8) as usize;
        let poly: Vec<Point> = if k % 2 == 0 {
            (0..nv)
                .map(|i| {
                    let a = std::f64::consts::TAU * i as f64 / nv as f64;
                    let rad = if i % 2 == 0 { 45.0 } else { 15.0 + r(25) as f64 };
                    Point::new(50 + (rad * a.cos()).round() as i32, 50 + (rad * a.sin()).round() as i32)
                })
                .collect()
        } else {
            (0..nv).map(|_| Point::new(r(101), r(101))).collect()
        };
        let mut pts: Vec<Point> = (0..500).map(|_| Point::new(r(111) - 5, r(111) - 5)).collect();
        for i in 0..nv {
            let (a, b) = (poly[i], poly[(i + 1) % nv]);
            pts.push(a);
            if (a.x + b.x) % 2 == 0 && (a.y + b.y) % 2 == 0 {
                pts.push(Point::new((a.x + b.x) / 2, (a.y + b.y) / 2));
            }
        }
        for p in pts {
            assert_eq!(point_in_polygon(p, &poly), inside_oracle(p, &poly), "poly {poly:?} point {p:?}");
            checked += 1;
        }
    }
    assert!(checked >= 5000);
}

#[test]
fn concave_notch_is_outside() {
    // U shape: the notch between the arms is not inside.
    let u = [(0, 0), (30, 0), (30, 30), (20, 30), (20, 10), (10, 10), (10, 30), (0, 30)].map(|(x, y)| Point::new(x, y));
    assert!(point_in_polygon(Point::new(5, 20), &u));
    assert!(point_in_polygon(Point::new(25, 20), &u));
    assert!(!point_in_polygon(Point::new(15, 20), &u));
    assert!(point_in_polygon(Point::new(15, 10), &u));
    assert!(point_in_polygon(Point::new(20, 20), &u));
    assert!(!point_in_polygon(Point::new(31, 5), &u));
    assert!(!point_in_polygon(Point::new(1, 1), &u[..2]));
}

#[test]
fn box_judge_is_inclusive() {
    let b = Rect::new(10, 20, 30, 40);
    for (p, want) in [((10, 20), true), ((30, 40), true), ((20, 30), true), ((9, 30), false), ((20, 41), false)] {
        assert_eq!(judge_point_in_box(Point::new(p.0, p.1), b), want, "{p:?}");
    }
}

proptest! {
    #[test]
    fn verdict_is_the_two_point_rule(rep in 0u32..=10_000, off in prop::option::of(0u32..=10_000)) {
        let want = match off {
            None => Verdict::NoBaseline,
            Some(o) if i64::from(rep) - i64::from(o) >= -200 => Verdict::Pass,
            Some(_) => Verdict::Fail,
        };
        prop_assert_eq!(verdict(Percent(rep), off.map(Percent)), want);
    }

    #[test]
    fn crop_round_trips(w in 1u32..3000, h in 1u32..3000, fx in 0.0..=1.0f64, fy in 0.0..=1.0f64, f in 0.01..=1.0f64) {
        let coarse = Point::new((fx * f64::from(w)) as i32, (fy * f64::from(h)) as i32);
        let c = crop_rect((w, h), coarse, f).unwrap();
        prop_assert!(c.x + c.w <= w && c.y + c.h <= h);
        prop_assert_eq!(c.w, ((f * f64::from(w)).round() as u32).clamp(1, w));
        prop_assert_eq!(c.h, ((f * f64::from(h)).round() as u32).clamp(1, h));
        if coarse.x < w as i32 && coarse.y < h as i32 {
            prop_assert!(c.contains(coarse));
        }
        for (lx, ly) in [(0, 0), (c.w - 1, c.h - 1), (c.w / 2, c.h / 3)] {
            let l = Point::new(lx as i32, ly as i32);
            let g = remap(&c, l);
            prop_assert_eq!(inverse_remap(&c, g), Some(l));
        }
        prop_assert_eq!(inverse_remap(&c, Point::new(c.x as i32 + c.w as i32, c.y as i32)), None);
        if f == 1.0 {
            prop_assert_eq!((c.x, c.y, c.w, c.h), (0, 0, w, h));
        }
    }

    #[test]
    fn normalized_answers_land_within_half_a_unit(w in 100u32..4000, h in 100u32..4000, px in 0.0..1.0f64, py in 0.0..1.0f64) {
        let p = profile(CoordinateConvention::Normalized0_1000, ParserId::Point);
        let (x, y) = ((px * f64::from(w)) as u32, (py * f64::from(h)) as u32);
        let nx = (f64::from(x) * 1000.0 / f64::from(w)).round();
        let ny = (f64::from(y) * 1000.0 / f64::from(h)).round();
        let Parsed::Point { point } = parse_output(&format!("({nx}, {ny})"), &p, (w, h)) else {
            return Err(TestCaseError::fail("not a point"));
        };
        // One normalized unit is w/1000 pixels; rounding twice costs at most
        // half a unit plus half a pixel.
        prop_assert!(f64::from((point.x - x as i32).abs()) <= f64::from(w) / 2000.0 + 0.5);
        prop_assert!(f64::from((point.y - y as i32).abs()) <= f64::from(h) / 2000.0 + 0.5);
    }
}

fn profile(conv: CoordinateConvention, parser: ParserId) -> ModelProfile {
    ModelProfile {
        model_id: "m".into(),
        prompt_template_id: "grounding_v1".into(),
        coordinate_convention: conv,
        max_pixels: 4_000_000,
        temperature: 0.0,
        parser_id: parser,
        refusal_token: "NOT_FOUND".into(),
        zoom: None,
        action_tolerance: ActionTolerance::default(),
    }
}

#[test]
fn the_same_text_means_different_pixels_per_convention() {
    let abs = profile(CoordinateConvention::AbsolutePixels, ParserId::Point);
    let norm = profile(CoordinateConvention::Normalized0_1000, ParserId::Point);
    let dims = (1920, 1080);
    assert_eq!(parse_output("(500, 250)", &abs, dims), Parsed::Point { point: Point::new(500, 250) });
    assert_eq!(parse_output("(500, 250)", &norm, dims), Parsed::Point { point: Point::new(960, 270) });
    let act = profile(CoordinateConvention::Normalized0_1000, ParserId::Action);
    let Parsed::Action { action } = parse_output("click(500, 250)", &act, dims) else { panic!() };
    assert_eq!(action.point, Some(Point::new(960, 270)));
    assert_eq!(parse_output("Sorry: not_found", &act, dims), Parsed::Refusal);
    assert_eq!(parse_output("click()", &act, dims), Parsed::ParseFailure);
}

#[test]
fn metrics_match_a_direct_count() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let plats = ["mobile", "desktop", "web"];
    let mut dataset = Vec::new();
    let mut results = Vec::new();
    for i in 0..137 {
        let id = format!("x{i}");
        let plat = plats[(rng.next_u64() % 3) as usize];
        dataset.push(BenchmarkSample {
            sample_id: id.clone(),
            image_ref: "a.png".into(),
            image_dims: (100, 100),
            instruction: "i".into(),
            ground_truth: GroundTruth::Refusal,
            categories: BTreeMap::from([("platform".to_string(), plat.to_string())]),
        });
        let ok = rng.next_u64() % 3 != 0;
        let reason = if ok { JudgeReason::RefusalMatch } else { JudgeReason::Miss };
        results.push(JudgeResult { sample_id: id, correct: ok, reason, note: None });
    }
    results.reverse();
    let m = compute_metrics(&results, &dataset).unwrap();
    let correct = results.iter().filter(|r| r.correct).count() as u64;
    assert_eq!((m.overall.correct, m.overall.total), (correct, 137));
    // Round half-up to hundredths of a percent.
    let pct = |c: u64, t: u64| Percent(((c as f64 * 10_000.0 / t as f64) + 0.5).floor() as u32);
    assert_eq!(m.overall.accuracy, pct(correct, 137));
    for plat in plats {
        let ids: Vec<&str> = dataset
            .iter()
            .filter(|s| s.categories["platform"] == plat)
            .map(|s| s.sample_id.as_str())
            .collect();
        let c = results.iter().filter(|r| r.correct && ids.contains(&r.sample_id.as_str())).count() as u64;
        let slice = &m.breakdowns["platform"][plat];
        assert_eq!((slice.correct, slice.total), (c, ids.len() as u64));
        assert_eq!(slice.accuracy, pct(c, ids.len() as u64));
    }
    results.pop();
    assert!(compute_metrics(&results, &dataset).is_err());
}

#[test]
fn reproduction_rate_counts_only_cells_with_a_baseline() {
    let off = |m: &str, v: Option<u32>| OfficialCell { model: m.into(), benchmark: "b".into(), official: v.map(Percent) };
    let table = [off("a", Some(5000)), off("b", Some(5000)), off("c", None), off("d", Some(9000))];
    let rows: Vec<(String, String, Percent)> = [("a", 4800), ("b", 4799), ("c", 1234), ("d", 9100), ("e", 1)]
        .iter()
        .map(|(m, v)| (m.to_string(), "b".to_string(), Percent(*v)))
        .collect();
    let r = compare_official(&rows, &table);
    assert_eq!((r.pass, r.fail, r.no_baseline), (2, 1, 2));
    assert_eq!(r.rate, Some(Percent(6667)));
    assert_eq!(r.rate_display.as_deref(), Some("66.7"));
    assert_eq!(r.rows[1].delta_hundredths, Some(-201));
    assert_eq!(compare_official(&rows[2..3], &table).rate, None);
}
