//! Plain-text SVG output: score heatmaps and per-layer profile plots.

use std::fmt::Write as _;

use crate::error::{Error, Result};

const LIGHT: [f64; 3] = [247.0, 251.0, 255.0];
const DARK: [f64; 3] = [8.0, 48.0, 107.0];
const LINE_COLORS: [&str; 6] = ["#08306b", "#d94801", "#238b45", "#6a51a3", "#969696", "#cb181d"];

/// Sequential light-to-dark blue for a value in [0, 1]; values outside are clamped.
pub fn palette(v: f64) -> String {
    let t = if v.is_finite() { v.clamp(0.0, 1.0) } else { 0.0 };
    let c: Vec<u8> = (0..3)
        .map(|i| (LIGHT[i] + (DARK[i] - LIGHT[i]) * t).round() as u8)
        .collect();
    format!("#{:02x}{:02x}{:02x}", c[0], c[1], c[2])
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

const CELL: usize = 36;
const MARGIN: usize = 90;

/// Heatmap of `values` (rows × cols) with word labels on both axes.
pub fn heatmap_svg(title: &str, rows: &[String], cols: &[String], values: &[Vec<f64>]) -> Result<String> {
    if rows.is_empty() || cols.is_empty() {
        return Err(Error::Data("heatmap needs at least one row and one column".into()));
    }
    if values.len() != rows.len() || values.iter().any(|r| r.len() != cols.len()) {
        return Err(Error::Dimension(format!(
            "heatmap values do not match {} x {} labels",
            rows.len(),
            cols.len()
        )));
    }
    let (w, h) = (MARGIN + cols.len() * CELL + 20, MARGIN + rows.len() * CELL + 20);
    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="11">"#
    )
    .unwrap();
    writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#).unwrap();
    writeln!(s, r#"<text x="{}" y="16" font-size="13">{}</text>"#, 8, escape(title)).unwrap();
    for (j, c) in cols.iter().enumerate() {
        let x = MARGIN + j * CELL + CELL / 2;
        writeln!(
            s,
            r#"<text x="{x}" y="{}" text-anchor="end" transform="rotate(-45 {x} {})">{}</text>"#,
            MARGIN - 6,
            MARGIN - 6,
            escape(c)
        )
        .unwrap();
    }
    for (i, r) in rows.iter().enumerate() {
        let y = MARGIN + i * CELL;
        writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#,
            MARGIN - 6,
            y + CELL / 2 + 4,
            escape(r)
        )
        .unwrap();
        for (j, &v) in values[i].iter().enumerate() {
            let x = MARGIN + j * CELL;
            writeln!(
                s,
                r#"<rect class="cell" x="{x}" y="{y}" width="{CELL}" height="{CELL}" fill="{}"><title>{}: {v:.4}</title></rect>"#,
                palette(v),
                escape(&format!("{} -> {}", r, cols[j]))
            )
            .unwrap();
        }
    }
    s.push_str("</svg>\n");
    Ok(s)
}

/// One line of a profile plot: points are (layer, value).
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<(usize, f64)>,
}

/// Per-layer line plot with a shared y axis from 0 to 1.
pub fn line_plot_svg(title: &str, series: &[Series]) -> Result<String> {
    if series.is_empty() || series.iter().all(|s| s.points.is_empty()) {
        return Err(Error::Data("nothing to plot".into()));
    }
    let max_layer = series.iter().flat_map(|s| s.points.iter().map(|p| p.0)).max().unwrap_or(1).max(1);
    let min_layer = series.iter().flat_map(|s| s.points.iter().map(|p| p.0)).min().unwrap_or(0);
    let (pw, ph) = (420.0, 240.0);
    let (ox, oy) = (50.0, 40.0);
    let w = ox + pw + 180.0;
    let h = oy + ph + 50.0;
    let span = (max_layer - min_layer).max(1) as f64;
    let x_of = |l: usize| ox + (l - min_layer) as f64 / span * pw;
    let y_of = |v: f64| oy + (1.0 - v.clamp(0.0, 1.0)) * ph;
    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="11">"#
    )
    .unwrap();
    writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#).unwrap();
    writeln!(s, r#"<text x="8" y="16" font-size="13">{}</text>"#, escape(title)).unwrap();
    writeln!(
        s,
        r##"<path d="M{ox} {oy} V{} H{}" fill="none" stroke="#444"/>"##,
        oy + ph,
        ox + pw
    )
    .unwrap();
    for k in 0..=4 {
        let v = k as f64 / 4.0;
        writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{v:.2}</text>"#, ox - 6.0, y_of(v) + 4.0).unwrap();
    }
    for l in min_layer..=max_layer {
        writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{l}</text>"#, x_of(l), oy + ph + 16.0).unwrap();
    }
    writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">layer</text>"#, ox + pw / 2.0, oy + ph + 34.0).unwrap();
    for (k, ser) in series.iter().enumerate() {
        let color = LINE_COLORS[k % LINE_COLORS.len()];
        let mut pts = ser.points.clone();
        pts.sort_by_key(|p| p.0);
        let path: Vec<String> = pts
            .iter()
            .enumerate()
            .map(|(i, &(l, v))| format!("{}{:.2} {:.2}", if i == 0 { "M" } else { "L" }, x_of(l), y_of(v)))
            .collect();
        writeln!(
            s,
            r#"<path class="series" d="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            path.join(" ")
        )
        .unwrap();
        for &(l, v) in &pts {
            writeln!(
                s,
                r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"><title>{} layer {l}: {v:.4}</title></circle>"#,
                x_of(l),
                y_of(v),
                escape(&ser.label)
            )
            .unwrap();
        }
        let ly = oy + 14.0 * k as f64;
        writeln!(
            s,
            r#"<rect x="{}" y="{}" width="12" height="3" fill="{color}"/><text x="{}" y="{}">{}</text>"#,
            ox + pw + 16.0,
            ly + 4.0,
            ox + pw + 32.0,
            ly + 8.0,
            escape(&ser.label)
        )
        .unwrap();
    }
    s.push_str("</svg>\n");
    Ok(s)
}
