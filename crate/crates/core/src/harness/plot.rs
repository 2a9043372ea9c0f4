//! Self-contained SVG rendering of a q curve: the estimate with its
//! Wilson band, truncated at t', with a marker at the indicator itself.
//! Output is plain text with two-decimal coordinates, so identical curves
//! produce byte-identical files on every platform.

use crate::audit::QCurve;
use crate::error::Result;
use crate::stats::wilson_interval;
use std::fmt::Write as _;
use std::path::Path;

const W: f64 = 640.0;
const H: f64 = 480.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 620.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 430.0;

fn fx(t: f64) -> f64 {
    LEFT + t * (RIGHT - LEFT)
}

fn fy(q: f64) -> f64 {
    BOTTOM - q * (BOTTOM - TOP)
}

fn num(v: f64) -> String {
    format!("{v:.2}")
}

/// Render the curve to an SVG document string. Points beyond t' are
/// dropped (estimates there are zero by construction of the search); the
/// band is the per-point Wilson interval at the curve's draw count.
pub fn render_plot(curve: &QCurve, t_prime: f64) -> Result<String> {
    curve.validate()?;
    let cut = curve.grid.iter().filter(|&&t| t <= t_prime).count().max(1);
    let ts = &curve.grid[..cut];
    let qs = &curve.estimates[..cut];
    let bands: Vec<(f64, f64)> = qs
        .iter()
        .map(|&q| {
            let successes = (q * curve.m as f64).round() as u64;
            wilson_interval(successes, curve.m as u64, 1.96)
        })
        .collect::<Result<_>>()?;

    let mut s = String::new();
    s.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    let _ = writeln!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {} {}\" \
         font-family=\"monospace\" font-size=\"13\">",
        num(W),
        num(H)
    );
    let _ = writeln!(s, "<rect width=\"{}\" height=\"{}\" fill=\"white\"/>", num(W), num(H));

    // Grid lines and tick labels on both axes.
    for i in 0..=4 {
        let v = i as f64 * 0.25;
        let (x, y) = (fx(v), fy(v));
        let _ = writeln!(
            s,
            "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"#dddddd\"/>",
            num(x),
            num(TOP),
            num(x),
            num(BOTTOM)
        );
        let _ = writeln!(
            s,
            "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"#dddddd\"/>",
            num(LEFT),
            num(y),
            num(RIGHT),
            num(y)
        );
        let _ = writeln!(
            s,
            "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>",
            num(x),
            num(BOTTOM + 20.0),
            num(v)
        );
        let _ = writeln!(
            s,
            "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{}</text>",
            num(LEFT - 8.0),
            num(y + 4.0),
            num(v)
        );
    }
    let _ = writeln!(
        s,
        "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"black\"/>",
        num(LEFT),
        num(TOP),
        num(RIGHT - LEFT),
        num(BOTTOM - TOP)
    );

    // Wilson band: polygon when there is area, an error bar for one point.
    if ts.len() >= 2 {
        let mut pts = String::new();
        for (t, (_, hi)) in ts.iter().zip(&bands) {
            let _ = write!(pts, "{},{} ", num(fx(*t)), num(fy(*hi)));
        }
        for (t, (lo, _)) in ts.iter().zip(&bands).rev() {
            let _ = write!(pts, "{},{} ", num(fx(*t)), num(fy(*lo)));
        }
        let _ = writeln!(
            s,
            "<polygon points=\"{}\" fill=\"#9ecae1\" fill-opacity=\"0.45\" stroke=\"none\"/>",
            pts.trim_end()
        );
        let mut line = String::new();
        for (t, q) in ts.iter().zip(qs) {
            let _ = write!(line, "{},{} ", num(fx(*t)), num(fy(*q)));
        }
        let _ = writeln!(
            s,
            "<polyline points=\"{}\" fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"2\"/>",
            line.trim_end()
        );
    } else {
        let (lo, hi) = bands[0];
        let _ = writeln!(
            s,
            "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"#9ecae1\" stroke-width=\"3\"/>",
            num(fx(ts[0])),
            num(fy(lo)),
            num(fx(ts[0])),
            num(fy(hi))
        );
    }
    for (t, q) in ts.iter().zip(qs) {
        let _ = writeln!(
            s,
            "<circle cx=\"{}\" cy=\"{}\" r=\"3\" fill=\"#1f77b4\"/>",
            num(fx(*t)),
            num(fy(*q))
        );
    }

    // The indicator itself: dashed vertical line with a label.
    let _ = writeln!(
        s,
        "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"#d62728\" \
         stroke-dasharray=\"6 4\"/>",
        num(fx(t_prime)),
        num(TOP),
        num(fx(t_prime)),
        num(BOTTOM)
    );
    let _ = writeln!(
        s,
        "<text x=\"{}\" y=\"{}\" fill=\"#d62728\">t' = {}</text>",
        num(fx(t_prime) + 6.0),
        num(TOP + 16.0),
        num(t_prime)
    );

    let _ = writeln!(
        s,
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">q estimate vs renoise time t \
         (M = {})</text>",
        num((LEFT + RIGHT) / 2.0),
        num(TOP - 14.0),
        curve.m
    );
    let _ = writeln!(
        s,
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">t</text>",
        num((LEFT + RIGHT) / 2.0),
        num(H - 8.0)
    );
    let _ = writeln!(
        s,
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 {} {})\">q</text>",
        num(18.0),
        num((TOP + BOTTOM) / 2.0),
        num(18.0),
        num((TOP + BOTTOM) / 2.0)
    );
    s.push_str("</svg>\n");
    Ok(s)
}

pub fn emit_plot(curve: &QCurve, t_prime: f64, path: &Path) -> Result<()> {
    std::fs::write(path, render_plot(curve, t_prime)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Minimal well-formedness check: every opened tag is closed in order.
    fn assert_well_formed_xml(doc: &str) {
        let mut stack: Vec<String> = Vec::new();
        let mut rest = doc;
        while let Some(start) = rest.find('<') {
            rest = &rest[start + 1..];
            let end = rest.find('>').expect("unterminated tag");
            let tag = &rest[..end];
            rest = &rest[end + 1..];
            if tag.starts_with('?') || tag.starts_with('!') {
                continue;
            }
            if let Some(name) = tag.strip_prefix('/') {
                let open = stack.pop().unwrap_or_else(|| panic!("stray closing </{name}>"));
                assert_eq!(open, name, "mismatched closing tag");
            } else if !tag.ends_with('/') {
                let name: String =
                    tag.chars().take_while(|c| !c.is_whitespace()).collect();
                stack.push(name);
            }
        }
        assert!(stack.is_empty(), "unclosed tags: {stack:?}");
    }

    fn curve(grid: Vec<f64>, estimates: Vec<f64>, m: usize) -> QCurve {
        QCurve { failures: vec![0; grid.len()], grid, estimates, m, seed: 0 }
    }

    #[test]
    fn single_point_curve_renders_one_marker() {
        let c = curve(vec![0.0], vec![1.0], 8);
        let svg = render_plot(&c, 0.0).unwrap();
        assert_well_formed_xml(&svg);
        assert_eq!(svg.matches("<circle").count(), 1);
        assert!(!svg.contains("<polyline"), "no line for a single point");
        assert!(svg.contains("t' = 0.00"));
    }

    #[test]
    fn truncation_drops_points_past_t_prime() {
        let grid: Vec<f64> = (0..=10).map(|i| i as f64 / 10.0).collect();
        let est: Vec<f64> = grid.iter().map(|&t| if t <= 0.6 { 0.5 } else { 0.0 }).collect();
        let c = curve(grid, est, 16);
        let svg = render_plot(&c, 0.6).unwrap();
        assert_well_formed_xml(&svg);
        // Points at 0.0 .. 0.6 inclusive survive; 0.7 .. 1.0 are dropped.
        assert_eq!(svg.matches("<circle").count(), 7);
        assert!(svg.contains("t' = 0.60"));
    }

    #[test]
    fn y_coordinates_stay_inside_the_probability_axis() {
        let grid: Vec<f64> = (0..=20).map(|i| i as f64 / 20.0).collect();
        let est: Vec<f64> = grid.iter().map(|&t| 1.0 - t).collect();
        let c = curve(grid, est, 16);
        let svg = render_plot(&c, 1.0).unwrap();
        assert_well_formed_xml(&svg);
        for chunk in svg.split("cy=\"").skip(1) {
            let v: f64 = chunk[..chunk.find('"').unwrap()].parse().unwrap();
            assert!((TOP..=BOTTOM).contains(&v), "cy {v} escapes the axis box");
        }
    }

    #[test]
    fn identical_curves_render_identical_bytes() {
        let c = curve(vec![0.0, 0.5, 1.0], vec![1.0, 0.25, 0.0], 16);
        assert_eq!(render_plot(&c, 0.5).unwrap(), render_plot(&c, 0.5).unwrap());
    }

    #[test]
    fn invalid_curve_rejected() {
        let c = curve(vec![0.5, 0.2], vec![0.1, 0.1], 4);
        assert!(render_plot(&c, 0.5).is_err());
    }
}
