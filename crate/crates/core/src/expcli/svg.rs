//! Minimal standalone SVG charts. Coordinates are printed with two decimals so output is
//! byte-stable for a given input.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::Result;

const W: f64 = 640.0;
const H: f64 = 400.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

fn frame(out: &mut String, title: &str, x_label: &str, y_label: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
    );
    let _ = writeln!(out, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="24" text-anchor="middle" font-family="sans-serif" font-size="16">{}</text>"#,
        W / 2.0,
        escape(title)
    );
    let (x0, y0, x1, y1) = (LEFT, H - BOTTOM, W - RIGHT, TOP);
    let _ = writeln!(
        out,
        r#"<g stroke="black" stroke-width="1"><line x1="{x0:.2}" y1="{y0:.2}" x2="{x1:.2}" y2="{y0:.2}"/><line x1="{x0:.2}" y1="{y0:.2}" x2="{x0:.2}" y2="{y1:.2}"/></g>"#
    );
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-family="sans-serif" font-size="12">{}</text>"#,
        (x0 + x1) / 2.0,
        H - 12.0,
        escape(x_label)
    );
    let _ = writeln!(
        out,
        r#"<text x="16" y="{:.2}" text-anchor="middle" font-family="sans-serif" font-size="12" transform="rotate(-90 16 {:.2})">{}</text>"#,
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0,
        escape(y_label)
    );
}

fn tick_label(out: &mut String, x: f64, y: f64, anchor: &str, v: f64) {
    let _ = writeln!(
        out,
        r#"<text x="{x:.2}" y="{y:.2}" text-anchor="{anchor}" font-family="sans-serif" font-size="10">{}</text>"#,
        fmt_tick(v)
    );
}

fn fmt_tick(v: f64) -> String {
    if v != 0.0 && (v.abs() < 1e-2 || v.abs() >= 1e5) {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}")
    }
}

/// Range padded so a constant series still gets a non-degenerate axis.
fn span((lo, hi): (f64, f64)) -> (f64, f64) {
    if hi > lo {
        (lo, hi)
    } else {
        (lo - 0.5, hi + 0.5)
    }
}

/// Line chart of `(x, y)` points as one polyline. An empty series yields just the axes.
pub fn line_chart(title: &str, x_label: &str, y_label: &str, points: &[(f64, f64)]) -> String {
    let mut out = String::new();
    frame(&mut out, title, x_label, y_label);
    if !points.is_empty() {
        let fold = |f: fn(&(f64, f64)) -> f64| {
            points
                .iter()
                .map(f)
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| {
                    (l.min(v), h.max(v))
                })
        };
        let (xl, xh) = span(fold(|p| p.0));
        let (yl, yh) = span(fold(|p| p.1));
        let px = |x: f64| LEFT + (x - xl) / (xh - xl) * (W - LEFT - RIGHT);
        let py = |y: f64| H - BOTTOM - (y - yl) / (yh - yl) * (H - TOP - BOTTOM);
        let coords: Vec<String> = points
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y)))
            .collect();
        let _ = writeln!(
            out,
            r#"<polyline fill="none" stroke="steelblue" stroke-width="2" points="{}"/>"#,
            coords.join(" ")
        );
        tick_label(&mut out, LEFT - 6.0, H - BOTTOM + 4.0, "end", yl);
        tick_label(&mut out, LEFT - 6.0, TOP + 4.0, "end", yh);
        tick_label(&mut out, LEFT, H - BOTTOM + 16.0, "middle", xl);
        tick_label(&mut out, W - RIGHT, H - BOTTOM + 16.0, "middle", xh);
    }
    out.push_str("</svg>\n");
    out
}

/// Bar chart with one bar per entry of `counts`, bars scaled to the largest count.
pub fn histogram(title: &str, x_label: &str, y_label: &str, counts: &[u64]) -> String {
    let mut out = String::new();
    frame(&mut out, title, x_label, y_label);
    let max = counts.iter().copied().max().unwrap_or(0).max(1) as f64;
    let plot_w = W - LEFT - RIGHT;
    let plot_h = H - TOP - BOTTOM;
    let slot = plot_w / counts.len().max(1) as f64;
    let bar = slot * 0.8;
    let _ = writeln!(out, r#"<g fill="steelblue">"#);
    for (i, &c) in counts.iter().enumerate() {
        let h = c as f64 / max * plot_h;
        let x = LEFT + i as f64 * slot + (slot - bar) / 2.0;
        let _ = writeln!(
            out,
            r#"<rect x="{x:.2}" y="{:.2}" width="{bar:.2}" height="{h:.2}"/>"#,
            H - BOTTOM - h
        );
    }
    let _ = writeln!(out, "</g>");
    tick_label(&mut out, LEFT - 6.0, H - BOTTOM + 4.0, "end", 0.0);
    tick_label(&mut out, LEFT - 6.0, TOP + 4.0, "end", max);
    tick_label(
        &mut out,
        LEFT + slot / 2.0,
        H - BOTTOM + 16.0,
        "middle",
        0.0,
    );
    if counts.len() > 1 {
        let last = (counts.len() - 1) as f64;
        tick_label(
            &mut out,
            W - RIGHT - slot / 2.0,
            H - BOTTOM + 16.0,
            "middle",
            last,
        );
    }
    out.push_str("</svg>\n");
    out
}

pub fn emit_svg(path: &Path, svg: &str) -> Result<()> {
    fs::write(path, svg)?;
    Ok(())
}
