//! Spatial cluster maps as standalone SVG.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use crate::error::{Error, Result};

/// Qualitative palette; cluster `c` uses entry `c % 12`.
pub const PALETTE: [&str; 12] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    "#bcbd22", "#17becf", "#aec7e8", "#ffbb78",
];

const PLOT_SIZE: f64 = 480.0;
const MARGIN: f64 = 20.0;
const LEGEND_WIDTH: f64 = 120.0;
const LEGEND_ROW: f64 = 18.0;

/// One filled circle per spot, colored by cluster, with a legend of the
/// cluster ids present. Output depends only on the inputs.
pub fn render_svg(coords: &[[f64; 2]], labels: &[usize]) -> Result<String> {
    if coords.len() != labels.len() {
        return Err(Error::Dimension(format!(
            "{} coordinates for {} labels",
            coords.len(),
            labels.len()
        )));
    }
    if coords.is_empty() {
        return Err(Error::InvalidArgument("nothing to plot".into()));
    }
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &[x, y] in coords {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    let extent = (x1 - x0).max(y1 - y0);
    let scale = if extent > 0.0 { PLOT_SIZE / extent } else { 1.0 };
    let spacing = min_spacing(coords).unwrap_or(extent.max(1.0)) * scale;
    let radius = (0.45 * spacing).clamp(1.0, 12.0);

    let present: BTreeSet<usize> = labels.iter().copied().collect();
    let width = PLOT_SIZE + 2.0 * MARGIN + LEGEND_WIDTH;
    let legend_height = present.len() as f64 * LEGEND_ROW + 2.0 * MARGIN;
    let height = (PLOT_SIZE + 2.0 * MARGIN).max(legend_height);

    let mut svg = String::new();
    writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}">"#
    )
    .unwrap();
    writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#).unwrap();
    writeln!(svg, r#"<g id="spots">"#).unwrap();
    for (&[x, y], &l) in coords.iter().zip(labels) {
        let cx = MARGIN + (x - x0) * scale;
        let cy = MARGIN + (y - y0) * scale;
        writeln!(
            svg,
            r#"<circle cx="{cx:.2}" cy="{cy:.2}" r="{radius:.2}" fill="{}"/>"#,
            PALETTE[l % PALETTE.len()]
        )
        .unwrap();
    }
    writeln!(svg, "</g>").unwrap();
    writeln!(svg, r#"<g id="legend" font-family="sans-serif" font-size="12">"#).unwrap();
    let lx = PLOT_SIZE + 2.0 * MARGIN;
    for (row, l) in present.iter().enumerate() {
        let ly = MARGIN + row as f64 * LEGEND_ROW;
        writeln!(
            svg,
            r#"<g class="legend-entry"><rect x="{lx:.2}" y="{ly:.2}" width="12" height="12" fill="{}"/><text x="{:.2}" y="{:.2}">cluster {l}</text></g>"#,
            PALETTE[l % PALETTE.len()],
            lx + 18.0,
            ly + 10.0
        )
        .unwrap();
    }
    writeln!(svg, "</g>\n</svg>").unwrap();
    Ok(svg)
}

/// Smallest distance between two distinct spots.
fn min_spacing(coords: &[[f64; 2]]) -> Option<f64> {
    let mut best: Option<f64> = None;
    for (i, a) in coords.iter().enumerate() {
        for b in &coords[i + 1..] {
            let d = ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
            if d > 0.0 && best.is_none_or(|m| d < m) {
                best = Some(d);
            }
        }
    }
    best
}
