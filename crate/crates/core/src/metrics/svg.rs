//! Standalone SVG time-series plots. Columns ending in `_pwm` share a right
//! axis; all other columns share the left axis.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{column_value, format_sig9, MetricsError, COLUMNS};
use crate::experiment::Trace;

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 450.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 80.0;
const TOP: f64 = 50.0;
const BOTTOM: f64 = 60.0;
const TICKS: usize = 5;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            _ => out.push(c),
        }
    }
    out
}

fn is_pwm(column: &str) -> bool {
    column.ends_with("_pwm")
}

/// Finite `(lo, hi)` with `lo < hi`, padded when all values coincide.
fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.filter(|v| v.is_finite()).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
        (lo.min(v), hi.max(v))
    });
    if lo > hi {
        (0.0, 1.0)
    } else if lo == hi {
        let pad = if lo == 0.0 { 1.0 } else { lo.abs() * 0.1 };
        (lo - pad, hi + pad)
    } else {
        (lo, hi)
    }
}

struct Axis {
    lo: f64,
    hi: f64,
}

impl Axis {
    fn y(&self, v: f64) -> f64 {
        let plot_h = HEIGHT - TOP - BOTTOM;
        TOP + plot_h * (1.0 - (v - self.lo) / (self.hi - self.lo))
    }
}

pub fn render_plot_svg(trace: &Trace, channels: &[&str]) -> Result<String, MetricsError> {
    for &c in channels {
        if !COLUMNS.contains(&c) {
            return Err(MetricsError::UnknownChannel(c.to_string()));
        }
    }
    if channels.is_empty() {
        return Err(MetricsError::UnknownChannel(String::new()));
    }
    let recs = &trace.records;

    let left_cols: Vec<&str> = channels.iter().copied().filter(|c| !is_pwm(c)).collect();
    let right_cols: Vec<&str> = channels.iter().copied().filter(|c| is_pwm(c)).collect();
    let axis_for = |cols: &[&str]| {
        let (lo, hi) = range(cols.iter().flat_map(|&c| recs.iter().map(move |r| column_value(r, c).expect("checked column"))));
        Axis { lo, hi }
    };
    let left = axis_for(&left_cols);
    let right = axis_for(&right_cols);
    let (t_lo, t_hi) = range(recs.iter().map(|r| r.t));
    let plot_w = WIDTH - LEFT - RIGHT;
    let x_of = |t: f64| LEFT + plot_w * (t - t_lo) / (t_hi - t_lo);

    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let title = if trace.label.is_empty() { trace.scenario.clone() } else { format!("{} ({})", trace.scenario, trace.label) };
    let _ = writeln!(s, r#"<title>{}</title>"#, escape(&title));
    let _ = writeln!(s, r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<rect x="{LEFT}" y="{TOP}" width="{plot_w}" height="{}" fill="none" stroke="black"/>"#,
        HEIGHT - TOP - BOTTOM
    );

    // Time axis.
    for i in 0..=TICKS {
        let t = t_lo + (t_hi - t_lo) * i as f64 / TICKS as f64;
        let x = x_of(t);
        let _ = writeln!(
            s,
            r#"<line x1="{x:.2}" y1="{}" x2="{x:.2}" y2="{}" stroke="black"/><text x="{x:.2}" y="{}" text-anchor="middle">{}</text>"#,
            HEIGHT - BOTTOM,
            HEIGHT - BOTTOM + 5.0,
            HEIGHT - BOTTOM + 20.0,
            escape(&format_sig9(round_tick(t)))
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">Time (s)</text>"#,
        LEFT + plot_w / 2.0,
        HEIGHT - 15.0
    );

    let mut side = |cols: &[&str], axis: &Axis, at_left: bool| {
        if cols.is_empty() {
            return;
        }
        let x = if at_left { LEFT } else { WIDTH - RIGHT };
        let (dx, anchor) = if at_left { (-8.0, "end") } else { (8.0, "start") };
        for i in 0..=TICKS {
            let v = axis.lo + (axis.hi - axis.lo) * i as f64 / TICKS as f64;
            let y = axis.y(v);
            let _ = writeln!(
                s,
                r#"<line x1="{}" y1="{y:.2}" x2="{x}" y2="{y:.2}" stroke="black"/><text x="{}" y="{:.2}" text-anchor="{anchor}">{}</text>"#,
                x + dx / 2.0,
                x + dx,
                y + 4.0,
                escape(&format_sig9(round_tick(v)))
            );
        }
        let label = escape(&cols.join(", "));
        let (lx, rot) = if at_left { (18.0, -90) } else { (WIDTH - 18.0, 90) };
        let ly = TOP + (HEIGHT - TOP - BOTTOM) / 2.0;
        let _ = writeln!(
            s,
            r#"<text x="{lx}" y="{ly}" text-anchor="middle" transform="rotate({rot} {lx} {ly})">{label}</text>"#
        );
    };
    side(&left_cols, &left, true);
    side(&right_cols, &right, false);

    for (i, &c) in channels.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let axis = if is_pwm(c) { &right } else { &left };
        let pts: Vec<(f64, f64)> = recs.iter().map(|r| (x_of(r.t), axis.y(column_value(r, c).expect("checked")))).collect();
        if pts.len() == 1 {
            let (x, y) = pts[0];
            let _ = writeln!(s, r#"<circle data-channel="{c}" cx="{x:.2}" cy="{y:.2}" r="3" fill="{color}"/>"#);
        } else if !pts.is_empty() {
            let mut p = String::new();
            for (j, (x, y)) in pts.iter().enumerate() {
                if j > 0 {
                    p.push(' ');
                }
                let _ = write!(p, "{x:.2},{y:.2}");
            }
            let _ = writeln!(s, r#"<polyline data-channel="{c}" fill="none" stroke="{color}" stroke-width="1.5" points="{p}"/>"#);
        }
        let ly = TOP - 30.0;
        let lx = LEFT + 10.0 + 170.0 * i as f64;
        let side = if is_pwm(c) { "right" } else { "left" };
        let _ = writeln!(
            s,
            r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="3"/><text x="{}" y="{}">{} ({side})</text>"#,
            lx + 20.0,
            lx + 25.0,
            ly + 4.0,
            escape(c)
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}

fn round_tick(v: f64) -> f64 {
    (v * 1e6).round() / 1e6
}

pub fn write_plot_svg(trace: &Trace, channels: &[&str], path: &Path) -> Result<(), MetricsError> {
    let svg = render_plot_svg(trace, channels)?;
    fs::write(path, svg)?;
    Ok(())
}
