//! Minimal SVG line charts: mean curves with a ±std band and a dashed marker
//! at the phase switch. Output depends only on the data, so reruns are
//! byte-identical.

use std::fmt::Write;

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 480.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 180.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    /// `(x, mean, std)`; non-finite means are skipped.
    pub points: Vec<(f64, f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Chart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
    /// x position of the dashed vertical marker.
    pub marker: Option<f64>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn bounds(chart: &Chart) -> (f64, f64, f64, f64) {
    let mut xs = (f64::INFINITY, f64::NEG_INFINITY);
    let mut ys = (f64::INFINITY, f64::NEG_INFINITY);
    for s in &chart.series {
        for &(x, m, sd) in s.points.iter().filter(|p| p.1.is_finite()) {
            xs = (xs.0.min(x), xs.1.max(x));
            let sd = if sd.is_finite() { sd } else { 0.0 };
            ys = (ys.0.min(m - sd), ys.1.max(m + sd));
        }
    }
    if !xs.0.is_finite() {
        return (0.0, 1.0, 0.0, 1.0);
    }
    if xs.0 == xs.1 {
        xs.1 = xs.0 + 1.0;
    }
    if ys.0 == ys.1 {
        ys = (ys.0 - 0.5, ys.1 + 0.5);
    }
    let pad = 0.05 * (ys.1 - ys.0);
    (xs.0, xs.1, ys.0 - pad, ys.1 + pad)
}

pub fn render(chart: &Chart) -> String {
    let (x0, x1, y0, y1) = bounds(chart);
    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| TOP + (1.0 - (y - y0) / (y1 - y0)) * ph;
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="24" text-anchor="middle" font-size="16">{}</text>"#,
        LEFT + pw / 2.0,
        escape(&chart.title)
    );
    let _ = writeln!(
        out,
        r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    for k in 0..=4 {
        let fx = k as f64 / 4.0;
        let xv = x0 + fx * (x1 - x0);
        let yv = y0 + fx * (y1 - y0);
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            sx(xv),
            TOP + ph + 18.0,
            format_tick(xv)
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
            LEFT - 6.0,
            sy(yv) + 4.0,
            format_tick(yv)
        );
        let _ = writeln!(
            out,
            r##"<line x1="{LEFT}" x2="{:.1}" y1="{:.1}" y2="{:.1}" stroke="#dddddd"/>"##,
            LEFT + pw,
            sy(yv),
            sy(yv)
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
        LEFT + pw / 2.0,
        HEIGHT - 12.0,
        escape(&chart.x_label)
    );
    let _ = writeln!(
        out,
        r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">{}</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0,
        escape(&chart.y_label)
    );
    for (k, s) in chart.series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let pts: Vec<(f64, f64, f64)> = s
            .points
            .iter()
            .filter(|p| p.1.is_finite())
            .map(|&(x, m, sd)| (x, m, if sd.is_finite() { sd } else { 0.0 }))
            .collect();
        if pts.is_empty() {
            continue;
        }
        let mut band = String::new();
        for &(x, m, sd) in &pts {
            let _ = write!(band, "{:.2},{:.2} ", sx(x), sy(m + sd));
        }
        for &(x, m, sd) in pts.iter().rev() {
            let _ = write!(band, "{:.2},{:.2} ", sx(x), sy(m - sd));
        }
        let _ = writeln!(
            out,
            r#"<polygon points="{}" fill="{color}" fill-opacity="0.2" stroke="none"/>"#,
            band.trim_end()
        );
        let line: Vec<String> = pts
            .iter()
            .map(|&(x, m, _)| format!("{:.2},{:.2}", sx(x), sy(m)))
            .collect();
        let _ = writeln!(
            out,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
            line.join(" ")
        );
        let ly = TOP + 10.0 + 18.0 * k as f64;
        let lx = LEFT + pw + 12.0;
        let _ = writeln!(
            out,
            r#"<line x1="{lx:.1}" x2="{:.1}" y1="{ly:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="3"/>"#,
            lx + 18.0
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}">{}</text>"#,
            lx + 24.0,
            ly + 4.0,
            escape(&s.label)
        );
    }
    if let Some(m) = chart.marker.filter(|m| (x0..=x1).contains(m)) {
        let _ = writeln!(
            out,
            r#"<line x1="{:.2}" x2="{:.2}" y1="{TOP}" y2="{:.1}" stroke="black" stroke-dasharray="6,4"/>"#,
            sx(m),
            sx(m),
            TOP + ph
        );
    }
    out.push_str("</svg>\n");
    out
}

fn format_tick(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e4 || v.abs() < 1e-2) {
        format!("{v:.1e}")
    } else {
        format!("{v:.2}")
    }
}
