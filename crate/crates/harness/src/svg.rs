//! SVG figures of packings, step functions and run traces.

use std::fmt::Write;

use improvevolve_core::aci::{aci_fitness, autoconvolve, StepFunction};
use improvevolve_core::engine::RunTrace;
use improvevolve_core::geometry::{hex_vertices, Hexagon};
use improvevolve_core::hex::HexConfig;
use improvevolve_core::{Point2, Solution};

const SIZE: f64 = 600.0;
const MARGIN: f64 = 40.0;

fn header(width: f64, height: f64) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" viewBox=\"0 0 {width} {height}\">\n\
         <rect width=\"{width}\" height=\"{height}\" fill=\"white\"/>\n"
    )
}

fn points_attr(points: impl IntoIterator<Item = (f64, f64)>) -> String {
    let mut out = String::new();
    for (x, y) in points {
        if !out.is_empty() {
            out.push(' ');
        }
        let _ = write!(out, "{x:.4},{y:.4}");
    }
    out
}

/// Container and every unit hexagon, with the side length as a label.
pub fn render_hex(c: &HexConfig) -> String {
    let side = c.side_length();
    let scale = (SIZE / 2.0 - MARGIN) / side;
    let map = |p: Point2| (SIZE / 2.0 + p.x * scale, SIZE / 2.0 - p.y * scale);
    let mut svg = header(SIZE, SIZE + 30.0);
    let container = hex_vertices(&Hexagon { center: Point2::ORIGIN, angle: 0.0, circumradius: side });
    let _ = writeln!(
        svg,
        "<polygon class=\"container\" points=\"{}\" fill=\"none\" stroke=\"black\" stroke-width=\"2\"/>",
        points_attr(container.into_iter().map(map))
    );
    for h in c.hexagons() {
        let _ = writeln!(
            svg,
            "<polygon class=\"tile\" points=\"{}\" fill=\"#9ecae1\" stroke=\"#08519c\" stroke-width=\"1\"/>",
            points_attr(hex_vertices(&h).into_iter().map(map))
        );
    }
    let _ = writeln!(
        svg,
        "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"18\" text-anchor=\"middle\">n = {}, L = {side:.4}</text>",
        SIZE / 2.0,
        SIZE + 15.0,
        c.n()
    );
    svg + "</svg>\n"
}

/// Panel frame and a polyline scaled to fit it.
fn panel(svg: &mut String, top: f64, height: f64, class: &str, xs: &[f64], ys: &[f64], title: &str) {
    let (x0, x1) = (xs[0], xs[xs.len() - 1]);
    let ymax = ys.iter().cloned().fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let width = SIZE * 1.5 - 2.0 * MARGIN;
    let mx = |x: f64| MARGIN + (x - x0) / (x1 - x0).max(f64::MIN_POSITIVE) * width;
    let my = |y: f64| top + height - y / ymax * (height - 20.0);
    let _ = writeln!(
        svg,
        "<rect x=\"{MARGIN}\" y=\"{top}\" width=\"{width}\" height=\"{height}\" fill=\"none\" stroke=\"#999\"/>"
    );
    let _ = writeln!(
        svg,
        "<polyline class=\"{class}\" points=\"{}\" fill=\"none\" stroke=\"#08519c\" stroke-width=\"1.5\"/>",
        points_attr(xs.iter().zip(ys).map(|(&x, &y)| (mx(x), my(y))))
    );
    let _ = writeln!(
        svg,
        "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"16\">{title}</text>",
        MARGIN + 8.0,
        top + 18.0
    );
}

/// Step plot of `f` on `[-1/4, 1/4]` and `f*f` on `[-1/2, 1/2]` with `C`.
pub fn render_aci(f: &StepFunction) -> String {
    let n = f.len();
    let h = 0.5 / n as f64;
    let mut xs = Vec::with_capacity(2 * n);
    let mut ys = Vec::with_capacity(2 * n);
    for (i, &v) in f.values().iter().enumerate() {
        let left = -0.25 + i as f64 * h;
        xs.extend([left, left + h]);
        ys.extend([v, v]);
    }
    let g = autoconvolve(f);
    let gx: Vec<f64> = (0..g.len()).map(|k| -0.5 + (k + 1) as f64 * h).collect();
    let c = aci_fitness(f).c_value;
    let panel_height = SIZE / 2.0 - MARGIN;
    let mut svg = header(SIZE * 1.5, SIZE);
    panel(&mut svg, MARGIN / 2.0, panel_height, "step-function", &xs, &ys, &format!("f, N = {n}"));
    panel(&mut svg, SIZE / 2.0 + MARGIN / 2.0, panel_height, "autoconvolution", &gx, &g, &format!("f*f, C = {c:.5}"));
    svg + "</svg>\n"
}

/// Best fitness against iteration.
pub fn render_trace(trace: &RunTrace) -> String {
    let curve = &trace.best_fitness_curve;
    let mut svg = header(SIZE * 1.5, SIZE / 1.5);
    if curve.is_empty() {
        let _ = writeln!(svg, "<text x=\"{MARGIN}\" y=\"{MARGIN}\" font-family=\"sans-serif\">no valid iterations</text>");
        return svg + "</svg>\n";
    }
    let lo = curve.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = curve.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = (hi - lo).max(1e-12);
    let width = SIZE * 1.5 - 2.0 * MARGIN;
    let height = SIZE / 1.5 - 2.0 * MARGIN;
    let steps = (curve.len() - 1).max(1) as f64;
    let pts = curve
        .iter()
        .enumerate()
        .map(|(i, &v)| (MARGIN + i as f64 / steps * width, MARGIN + height - (v - lo) / span * height));
    let _ = writeln!(
        svg,
        "<rect x=\"{MARGIN}\" y=\"{MARGIN}\" width=\"{width}\" height=\"{height}\" fill=\"none\" stroke=\"#999\"/>"
    );
    let _ = writeln!(
        svg,
        "<polyline class=\"best-fitness\" points=\"{}\" fill=\"none\" stroke=\"#08519c\" stroke-width=\"1.5\"/>",
        points_attr(pts)
    );
    let _ = writeln!(
        svg,
        "<text x=\"{MARGIN}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"14\">best fitness {lo:.6} to {hi:.6} over {} iterations</text>",
        MARGIN - 10.0,
        curve.len()
    );
    svg + "</svg>\n"
}

pub fn render_solution(s: &Solution) -> String {
    match s {
        Solution::Hex(c) => render_hex(c),
        Solution::Aci(f) => render_aci(f),
    }
}

/// Points of the first polyline with the given class, as numbers.
pub fn polyline_points(svg: &str, class: &str) -> Option<Vec<(f64, f64)>> {
    let tag = svg.find(&format!("<polyline class=\"{class}\""))?;
    let rest = &svg[tag..];
    let start = rest.find("points=\"")? + 8;
    let end = start + rest[start..].find('"')?;
    rest[start..end]
        .split_whitespace()
        .map(|p| {
            let (x, y) = p.split_once(',')?;
            Some((x.parse().ok()?, y.parse().ok()?))
        })
        .collect()
}
