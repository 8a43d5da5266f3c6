//! Scatter plot of a sweep as a standalone SVG document.

use std::fmt::Write as _;

use pprobe_core::pareto::Mode;
use pprobe_core::trainer::Axis;

use crate::output::SweepRow;

pub const WIDTH: f64 = 800.0;
pub const HEIGHT: f64 = 600.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 20.0;
const BOTTOM: f64 = 60.0;
const TICKS: usize = 5;

/// Plotted range of `values` with 5% padding on both sides.
pub fn padded_range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() || !hi.is_finite() {
        return (0.0, 1.0);
    }
    let span = hi - lo;
    let pad = if span > 0.0 { 0.05 * span } else { 0.05 * lo.abs().max(1.0) };
    (lo - pad, hi + pad)
}

pub fn axis_labels(mode: Mode, axis: Axis) -> (&'static str, &'static str) {
    let x = match axis {
        Axis::Bleu => "BLEU (higher = better)",
        Axis::Loss => "held-out task loss, nats/token (lower = better)",
    };
    let y = match mode {
        Mode::Add => "probe CE, nats (lower = more information)",
        Mode::Remove => "probe CE, nats (higher = less information)",
    };
    (x, y)
}

/// Circles for runs, a triangle for the reference run and a polyline
/// through the frontier runs in task order. Failed runs are drawn hollow.
pub fn render(rows: &[SweepRow], mode: Mode, axis: Axis) -> String {
    let task = |r: &SweepRow| match (axis, r.bleu) {
        (Axis::Bleu, Some(b)) => b,
        _ => r.task_loss,
    };
    let (x0, x1) = padded_range(rows.iter().map(task));
    let (y0, y1) = padded_range(rows.iter().map(|r| r.probe_ce));
    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| TOP + (y1 - y) / (y1 - y0) * ph;

    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {WIDTH} {HEIGHT}" width="{WIDTH}" height="{HEIGHT}" font-family="sans-serif" font-size="12">"#
    )
    .unwrap();
    writeln!(s, r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#).unwrap();
    writeln!(
        s,
        r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    )
    .unwrap();
    for i in 0..=TICKS {
        let f = i as f64 / TICKS as f64;
        let (xv, yv) = (x0 + f * (x1 - x0), y0 + f * (y1 - y0));
        let (px, py) = (sx(xv), sy(yv));
        let base = TOP + ph;
        writeln!(s, r#"<line x1="{px:.2}" y1="{base}" x2="{px:.2}" y2="{:.2}" stroke="black"/>"#, base + 5.0).unwrap();
        writeln!(s, r#"<text x="{px:.2}" y="{:.2}" text-anchor="middle">{xv:.3}</text>"#, base + 20.0).unwrap();
        writeln!(s, r#"<line x1="{:.2}" y1="{py:.2}" x2="{LEFT}" y2="{py:.2}" stroke="black"/>"#, LEFT - 5.0).unwrap();
        writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{yv:.3}</text>"#, LEFT - 8.0, py + 4.0).unwrap();
    }
    let (xl, yl) = axis_labels(mode, axis);
    writeln!(
        s,
        r#"<text class="axis-label" x="{:.2}" y="{:.2}" text-anchor="middle">{xl}</text>"#,
        LEFT + pw / 2.0,
        HEIGHT - 15.0
    )
    .unwrap();
    writeln!(
        s,
        r#"<text class="axis-label" x="20" y="{:.2}" text-anchor="middle" transform="rotate(-90 20 {:.2})">{yl}</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0
    )
    .unwrap();

    let mut front: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.on_frontier)
        .map(|r| (sx(task(r)), sy(r.probe_ce)))
        .collect();
    front.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    if !front.is_empty() {
        let pts: Vec<String> = front.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
        writeln!(
            s,
            r#"<polyline class="frontier" points="{}" fill="none" stroke="crimson" stroke-width="1.5"/>"#,
            pts.join(" ")
        )
        .unwrap();
    }

    for r in rows {
        let (x, y) = (sx(task(r)), sy(r.probe_ce));
        let fill = if r.failed { "none" } else if r.on_frontier { "crimson" } else { "steelblue" };
        if r.is_reference() {
            writeln!(
                s,
                r#"<polygon class="reference" points="{:.2},{:.2} {:.2},{:.2} {:.2},{:.2}" fill="{fill}" stroke="black"><title>reference seed {}</title></polygon>"#,
                x,
                y - 7.0,
                x - 6.0,
                y + 5.0,
                x + 6.0,
                y + 5.0,
                r.seed
            )
            .unwrap();
        } else {
            writeln!(
                s,
                r#"<circle class="run" cx="{x:.2}" cy="{y:.2}" r="5" fill="{fill}" stroke="black"><title>lambda {} seed {}</title></circle>"#,
                r.lambda, r.seed
            )
            .unwrap();
        }
    }
    s.push_str("</svg>\n");
    s
}
