//! Static SVG charts. Output is a pure function of the inputs, numbers are
//! printed with fixed precision so identical inputs give identical bytes.

use std::fmt::Write as _;

use super::SvccaReport;
use crate::data::LabelVocabulary;
use crate::linalg::Matrix;

const PALETTE: [&str; 10] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
];
const UNLABELED: &str = "#c0c0c0";

const W: f64 = 640.0;
const H: f64 = 420.0;
const LEFT: f64 = 60.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn header(out: &mut String, title: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(out, r#"<text x="{LEFT}" y="24" font-size="14">{}</text>"#, escape(title));
}

fn frame(out: &mut String) {
    let (x0, y0, x1, y1) = (LEFT, H - BOTTOM, W - RIGHT, TOP);
    let _ = writeln!(out, r#"<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>"#);
    let _ = writeln!(out, r#"<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>"#);
}

fn legend(out: &mut String, entries: &[(String, &str)]) {
    let x = W - RIGHT + 16.0;
    for (i, (name, color)) in entries.iter().enumerate() {
        let y = TOP + 8.0 + 18.0 * i as f64;
        let _ = writeln!(out, r#"<rect x="{x}" y="{:.1}" width="10" height="10" fill="{color}"/>"#, y - 9.0);
        let _ = writeln!(out, r#"<text x="{:.1}" y="{y:.1}">{}</text>"#, x + 16.0, escape(name));
    }
}

/// Mean SVCCA versus layer index, one polyline per tier on a `[0, 1]` axis.
pub fn line_chart_svg(report: &SvccaReport) -> String {
    let mut out = String::new();
    header(&mut out, &format!("SVCCA by layer: {}", report.model_id));
    frame(&mut out);
    let plot_w = W - LEFT - RIGHT;
    let plot_h = H - TOP - BOTTOM;
    let span = (report.n_layers.max(2) - 1) as f64;
    let px = |l: usize| LEFT + plot_w * l as f64 / span;
    let py = |v: f64| H - BOTTOM - plot_h * v.clamp(0.0, 1.0);
    for tick in 0..=4 {
        let v = tick as f64 / 4.0;
        let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{v:.2}</text>"#, LEFT - 6.0, py(v) + 4.0);
    }
    for l in 0..report.n_layers {
        let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{l}</text>"#, px(l), H - BOTTOM + 16.0);
    }
    let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">layer</text>"#, LEFT + plot_w / 2.0, H - 12.0);
    let mut keys = Vec::new();
    for (i, &tier) in report.config.tiers.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> = report
            .curve(tier)
            .iter()
            .enumerate()
            .filter_map(|(l, v)| v.map(|v| format!("{:.2},{:.2}", px(l), py(v))))
            .collect();
        let _ = writeln!(
            out,
            r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#,
            pts.join(" ")
        );
        keys.push((tier.to_string(), color));
    }
    legend(&mut out, &keys);
    out.push_str("</svg>\n");
    out
}

/// Scatter of 2-D points coloured by category; the legend lists every
/// vocabulary entry, unlabeled points are grey.
pub fn scatter_svg(points: &Matrix, labels: &[Option<usize>], vocab: &LabelVocabulary, title: &str) -> String {
    let mut out = String::new();
    header(&mut out, title);
    frame(&mut out);
    let (xs, ys) = (points.column(0), points.column(1));
    let range = |v: &[f64]| {
        let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let pad = ((hi - lo) * 0.05).max(1e-9);
        (lo - pad, hi + pad)
    };
    let (x_lo, x_hi) = range(&xs);
    let (y_lo, y_hi) = range(&ys);
    let plot_w = W - LEFT - RIGHT;
    let plot_h = H - TOP - BOTTOM;
    for (i, (x, y)) in xs.iter().zip(&ys).enumerate() {
        let cx = LEFT + plot_w * (x - x_lo) / (x_hi - x_lo);
        let cy = H - BOTTOM - plot_h * (y - y_lo) / (y_hi - y_lo);
        let color = labels.get(i).copied().flatten().map_or(UNLABELED, |c| PALETTE[c % PALETTE.len()]);
        let _ = writeln!(out, r#"<circle cx="{cx:.2}" cy="{cy:.2}" r="2.5" fill="{color}" fill-opacity="0.7"/>"#);
    }
    let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">PC1</text>"#, LEFT + plot_w / 2.0, H - 12.0);
    let keys: Vec<(String, &str)> = vocab
        .categories
        .iter()
        .enumerate()
        .map(|(i, c)| (c.clone(), PALETTE[i % PALETTE.len()]))
        .collect();
    legend(&mut out, &keys);
    out.push_str("</svg>\n");
    out
}
