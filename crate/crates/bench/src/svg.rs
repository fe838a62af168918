//! Consistency-versus-alignment scatter, one marker per scored row.

use std::fmt::Write as _;

use crate::report::RunReport;

const W: f64 = 640.0;
const H: f64 = 480.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 50.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf",
];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        return (lo - 0.5, hi + 0.5);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

pub fn tradeoff_svg(report: &RunReport) -> String {
    let points: Vec<(usize, f64, f64)> = {
        let editors = report.editors();
        report
            .rows
            .iter()
            .filter_map(|r| {
                let k = editors.iter().position(|e| *e == r.editor)?;
                Some((k, r.consistency?, r.alignment?))
            })
            .collect()
    };
    let (x0, x1) = range(points.iter().map(|p| p.1));
    let (y0, y1) = range(points.iter().map(|p| p.2));
    let pw = W - LEFT - RIGHT;
    let ph = H - TOP - BOTTOM;
    let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| TOP + ph - (y - y0) / (y1 - y0) * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<g class="axes" stroke="black"><line x1="{LEFT}" y1="{b}" x2="{r}" y2="{b}"/><line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{b}"/></g>"#,
        b = TOP + ph,
        r = LEFT + pw
    );
    for (v, x) in [(x0, LEFT), (x1, LEFT + pw)] {
        let _ = writeln!(s, r#"<text x="{x:.1}" y="{:.1}" text-anchor="middle">{v:.3}</text>"#, TOP + ph + 16.0);
    }
    for (v, y) in [(y0, TOP + ph), (y1, TOP)] {
        let _ = writeln!(s, r#"<text x="{:.1}" y="{y:.1}" text-anchor="end">{v:.3}</text>"#, LEFT - 6.0);
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">consistency (irrelevant-block MSE, lower is better)</text>"#,
        LEFT + pw / 2.0,
        H - 10.0
    );
    let _ = writeln!(
        s,
        r#"<text transform="translate(16 {:.1}) rotate(-90)" text-anchor="middle">alignment (distance to target, lower is better)</text>"#,
        TOP + ph / 2.0
    );
    let _ = writeln!(s, r#"<g class="markers">"#);
    let editors = report.editors();
    for &(k, x, y) in &points {
        let _ = writeln!(
            s,
            r#"<circle class="marker" data-editor="{}" cx="{:.2}" cy="{:.2}" r="4" fill="{}" fill-opacity="0.7"/>"#,
            escape(&editors[k]),
            sx(x),
            sy(y),
            PALETTE[k % PALETTE.len()]
        );
    }
    let _ = writeln!(s, "</g>");
    let _ = writeln!(s, r#"<g class="legend">"#);
    for (k, e) in editors.iter().enumerate() {
        let y = TOP + 10.0 + 20.0 * k as f64;
        let x = LEFT + pw + 20.0;
        let _ = writeln!(
            s,
            r#"<rect x="{x:.1}" y="{:.1}" width="10" height="10" fill="{}"/><text x="{:.1}" y="{:.1}">{}</text>"#,
            y - 9.0,
            PALETTE[k % PALETTE.len()],
            x + 16.0,
            y,
            escape(e)
        );
    }
    let _ = writeln!(s, "</g>");
    s.push_str("</svg>\n");
    s
}
