use alloc::string::{String, ToString};
use alloc::vec::Vec;

use super::profile::{CoordinateConvention, ModelProfile, ParserId};
use super::sample::{ActionRecord, ActionType, Parsed};
use crate::geometry::Point;

/// Decimal numbers in order of appearance.
fn numbers(s: &str) -> Vec<f64> {
    let b = s.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < b.len() {
        let neg = b[i] == b'-' && i + 1 < b.len() && b[i + 1].is_ascii_digit();
        if b[i].is_ascii_digit() || neg {
            let start = i;
            i += 1;
            while i < b.len() && b[i].is_ascii_digit() {
                i += 1;
            }
            if i + 1 < b.len() && b[i] == b'.' && b[i + 1].is_ascii_digit() {
                i += 1;
                while i < b.len() && b[i].is_ascii_digit() {
                    i += 1;
                }
            }
            if let Ok(v) = s[start..i].parse::<f64>() {
                out.push(v);
            }
        } else {
            i += 1;
        }
    }
    out
}

/// Convert a model coordinate to original-image pixels. `None` when the
/// value is outside the convention's range or the image.
fn to_pixels(x: f64, y: f64, convention: CoordinateConvention, dims: (u32, u32)) -> Option<Point> {
    let (w, h) = (f64::from(dims.0), f64::from(dims.1));
    let (px, py) = match convention {
        CoordinateConvention::Normalized0_1000 => {
            if !(0.0..=1000.0).contains(&x) || !(0.0..=1000.0).contains(&y) {
                return None;
            }
            (libm::round(x * w / 1000.0), libm::round(y * h / 1000.0))
        }
        CoordinateConvention::AbsolutePixels => (libm::round(x), libm::round(y)),
    };
    if px < 0.0 || py < 0.0 || px > w || py > h {
        return None;
    }
    Some(Point::new(px as i32, py as i32))
}

fn contains_ci(haystack: &str, needle: &str) -> bool {
    !needle.is_empty() && haystack.to_lowercase().contains(&needle.to_lowercase())
}

/// First `name(args)` call in the text.
fn first_call(raw: &str) -> Option<(String, &str)> {
    let b = raw.as_bytes();
    let mut i = 0;
    while i < b.len() {
        if b[i].is_ascii_alphabetic() || b[i] == b'_' {
            let start = i;
            while i < b.len() && (b[i].is_ascii_alphanumeric() || b[i] == b'_') {
                i += 1;
            }
            let name_end = i;
            while i < b.len() && b[i] == b' ' {
                i += 1;
            }
            if i < b.len() && b[i] == b'(' {
                let args_start = i + 1;
                let args_end = raw[args_start..].find(')').map_or(raw.len(), |e| args_start + e);
                return Some((raw[start..name_end].to_lowercase(), &raw[args_start..args_end]));
            }
        } else {
            i += 1;
        }
    }
    None
}

fn quoted(args: &str) -> Option<&str> {
    for q in ['"', '\''] {
        if let Some(open) = args.find(q) {
            if let Some(close) = args[open + 1..].find(q) {
                return Some(&args[open + 1..open + 1 + close]);
            }
        }
    }
    None
}

fn parse_action(raw: &str, profile: &ModelProfile, dims: (u32, u32)) -> Parsed {
    let Some((name, args)) = first_call(raw) else {
        return Parsed::ParseFailure;
    };
    let conv = profile.coordinate_convention;
    let mut rec = ActionRecord { action_type: name.clone(), ..ActionRecord::default() };
    match ActionType::parse(&name) {
        ActionType::Click | ActionType::LongPress => {
            let n = numbers(args);
            let Some(p) = (n.len() >= 2).then(|| to_pixels(n[0], n[1], conv, dims)).flatten() else {
                return Parsed::ParseFailure;
            };
            rec.point = Some(p);
        }
        ActionType::Type => {
            rec.text = Some(quoted(args).unwrap_or(args.trim()).to_string());
        }
        ActionType::Scroll => {
            let lower = args.to_lowercase();
            if let Some(d) = ["up", "down", "left", "right"].iter().find(|d| lower.contains(*d)) {
                rec.direction = Some((*d).into());
            } else {
                let n = numbers(args);
                if n.len() < 4 {
                    return Parsed::ParseFailure;
                }
                match (to_pixels(n[0], n[1], conv, dims), to_pixels(n[2], n[3], conv, dims)) {
                    (Some(s), Some(e)) => {
                        rec.start = Some(s);
                        rec.end = Some(e);
                    }
                    _ => return Parsed::ParseFailure,
                }
            }
        }
        _ => {}
    }
    Parsed::Action { action: rec }
}

/// Parse raw model output according to the profile's parser, refusal token
/// and coordinate convention. Points come back in original-image pixels.
pub fn parse_output(raw: &str, profile: &ModelProfile, image_dims: (u32, u32)) -> Parsed {
    if contains_ci(raw, &profile.refusal_token) {
        return Parsed::Refusal;
    }
    match profile.parser_id {
        ParserId::Point => {
            let n = numbers(raw);
            if n.len() < 2 {
                return Parsed::ParseFailure;
            }
            match to_pixels(n[0], n[1], profile.coordinate_convention, image_dims) {
                Some(point) => Parsed::Point { point },
                None => Parsed::ParseFailure,
            }
        }
        ParserId::Action => parse_action(raw, profile, image_dims),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::profile::ActionTolerance;

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
    fn normalized_point_converts() {
        let p = profile(CoordinateConvention::Normalized0_1000, ParserId::Point);
        assert_eq!(parse_output("(500, 500)", &p, (1000, 2000)), Parsed::Point { point: Point::new(500, 1000) });
        assert_eq!(parse_output("click at [250,750] now", &p, (1920, 1080)), Parsed::Point { point: Point::new(480, 810) });
        assert_eq!(parse_output("(1200, 5)", &p, (1000, 1000)), Parsed::ParseFailure);
    }

    #[test]
    fn absolute_point_rounds() {
        let p = profile(CoordinateConvention::AbsolutePixels, ParserId::Point);
        assert_eq!(parse_output("x=10.6, y=20.4", &p, (100, 100)), Parsed::Point { point: Point::new(11, 20) });
        assert_eq!(parse_output("(-5, 3)", &p, (100, 100)), Parsed::ParseFailure);
        assert_eq!(parse_output("(150, 3)", &p, (100, 100)), Parsed::ParseFailure);
    }

    #[test]
    fn refusal_and_garbage() {
        let p = profile(CoordinateConvention::AbsolutePixels, ParserId::Point);
        assert_eq!(parse_output("The element is NOT_FOUND here", &p, (100, 100)), Parsed::Refusal);
        assert_eq!(parse_output("not_found", &p, (100, 100)), Parsed::Refusal);
        assert_eq!(parse_output("I cannot tell", &p, (100, 100)), Parsed::ParseFailure);
        assert_eq!(parse_output("", &p, (100, 100)), Parsed::ParseFailure);
        assert_eq!(parse_output("only 7", &p, (100, 100)), Parsed::ParseFailure);
    }

    #[test]
    fn action_calls() {
        let p = profile(CoordinateConvention::AbsolutePixels, ParserId::Action);
        let dims = (1000, 1000);
        let Parsed::Action { action } = parse_output("Thought: ok. click(120, 340)", &p, dims) else { panic!() };
        assert_eq!(action.point, Some(Point::new(120, 340)));
        let Parsed::Action { action } = parse_output("type(\"Hello world\")", &p, dims) else { panic!() };
        assert_eq!(action.text.as_deref(), Some("Hello world"));
        let Parsed::Action { action } = parse_output("scroll(direction='down')", &p, dims) else { panic!() };
        assert_eq!(action.direction.as_deref(), Some("down"));
        let Parsed::Action { action } = parse_output("swipe(10, 500, 10, 100)", &p, dims) else { panic!() };
        assert_eq!((action.start, action.end), (Some(Point::new(10, 500)), Some(Point::new(10, 100))));
        let Parsed::Action { action } = parse_output("back()", &p, dims) else { panic!() };
        assert_eq!(action.kind(), ActionType::Back);
        assert_eq!(parse_output("click()", &p, dims), Parsed::ParseFailure);
        assert_eq!(parse_output("no call here", &p, dims), Parsed::ParseFailure);
    }
}
