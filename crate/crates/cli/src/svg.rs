//! Minimal deterministic SVG plots. Elements are emitted in input order and
//! every number is printed with fixed precision, so equal data gives equal
//! bytes.

use std::fmt::Write as _;
use std::path::Path;

use iocnn::metrics::ReliabilityBins;
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlotKind {
    LossCurves,
    AccuracyCurves,
    BoundaryMap,
    ReliabilityDiagram,
    GatePartition,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PlotData<'a> {
    /// One polyline per series over epochs `1..=len`.
    Curves { title: String, series: Vec<Series> },
    /// Row `iy` of `labels` is drawn at the `iy`-th y value from the bottom.
    LabelGrid {
        title: String,
        labels: &'a Array2<usize>,
        x_range: (f64, f64),
        y_range: (f64, f64),
        /// Optional scatter of `(x, y, class)` overlaid on the cells.
        points: Vec<(f64, f64, usize)>,
    },
    Reliability { title: String, bins: &'a ReliabilityBins },
}

const W: f64 = 640.0;
const H: f64 = 480.0;
const LEFT: f64 = 64.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 56.0;
const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
];
const CELL_PALETTE: [&str; 10] = [
    "#aec7e8", "#ffbb78", "#98df8a", "#ff9896", "#c5b0d5", "#c49c94", "#f7b6d2", "#c7c7c7", "#dbdb8d", "#9edae5",
];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        LEFT + (x - self.x0) / (self.x1 - self.x0) * (W - LEFT - RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        H - BOTTOM - (y - self.y0) / (self.y1 - self.y0) * (H - TOP - BOTTOM)
    }
}

fn header(out: &mut String, title: &str) {
    writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    )
    .ok();
    writeln!(out, r#"<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>"#).ok();
    writeln!(
        out,
        r#"<text x="{:.2}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
        (W - RIGHT + LEFT) / 2.0,
        escape(title)
    )
    .ok();
}

fn axes(out: &mut String, f: &Frame, x_label: &str, y_label: &str) {
    let (l, r, t, b) = (LEFT, W - RIGHT, TOP, H - BOTTOM);
    writeln!(out, r#"<g id="axes" stroke="black" fill="none">"#).ok();
    writeln!(out, r#"<line x1="{l:.2}" y1="{b:.2}" x2="{r:.2}" y2="{b:.2}"/>"#).ok();
    writeln!(out, r#"<line x1="{l:.2}" y1="{b:.2}" x2="{l:.2}" y2="{t:.2}"/>"#).ok();
    writeln!(out, "</g>").ok();
    writeln!(out, r#"<g id="ticks" font-size="10">"#).ok();
    for i in 0..=4 {
        let fx = f.x0 + (f.x1 - f.x0) * i as f64 / 4.0;
        let fy = f.y0 + (f.y1 - f.y0) * i as f64 / 4.0;
        writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            f.px(fx),
            b + 16.0,
            tick(fx)
        )
        .ok();
        writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            l - 6.0,
            f.py(fy) + 4.0,
            tick(fy)
        )
        .ok();
    }
    writeln!(out, "</g>").ok();
    writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        (l + r) / 2.0,
        H - 16.0,
        escape(x_label)
    )
    .ok();
    writeln!(
        out,
        r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">{}</text>"#,
        (t + b) / 2.0,
        (t + b) / 2.0,
        escape(y_label)
    )
    .ok();
}

fn tick(v: f64) -> String {
    if v.abs() >= 100.0 || v == v.trunc() {
        format!("{v:.0}")
    } else {
        format!("{v:.2}")
    }
}

fn legend(out: &mut String, entries: &[(String, &str)]) {
    writeln!(out, r#"<g id="legend">"#).ok();
    for (i, (name, color)) in entries.iter().enumerate() {
        let y = TOP + 12.0 + 18.0 * i as f64;
        let x = W - RIGHT + 12.0;
        writeln!(
            out,
            r#"<rect x="{x:.2}" y="{:.2}" width="12" height="12" fill="{color}"/><text x="{:.2}" y="{:.2}">{}</text>"#,
            y - 10.0,
            x + 18.0,
            y,
            escape(name)
        )
        .ok();
    }
    writeln!(out, "</g>").ok();
}

fn curves(out: &mut String, kind: PlotKind, title: &str, series: &[Series]) -> CliResult<()> {
    let len = series.first().map_or(0, |s| s.values.len());
    if series.is_empty() || len == 0 {
        return Err(CliError::Plot("curve plot needs at least one non-empty series".into()));
    }
    if let Some(s) = series.iter().find(|s| s.values.len() != len) {
        return Err(CliError::Plot(format!(
            "series {:?} has {} points, expected {len}",
            s.name,
            s.values.len()
        )));
    }
    let finite = series.iter().flat_map(|s| s.values.iter().copied()).filter(|v| v.is_finite());
    let (mut lo, mut hi) = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if kind == PlotKind::AccuracyCurves {
        lo = 0.0;
        hi = 1.0;
    }
    if !lo.is_finite() {
        lo = 0.0;
        hi = 1.0;
    }
    if hi <= lo {
        hi = lo + 1.0;
    }
    let f = Frame {
        x0: 1.0,
        x1: (len as f64).max(2.0),
        y0: lo.min(0.0),
        y1: hi,
    };
    header(out, title);
    let y_label = if kind == PlotKind::LossCurves { "loss" } else { "accuracy" };
    axes(out, &f, "epoch", y_label);
    writeln!(out, r#"<g id="series" fill="none" stroke-width="1.5">"#).ok();
    for (i, s) in series.iter().enumerate() {
        let pts: Vec<String> = s
            .values
            .iter()
            .enumerate()
            .filter(|(_, v)| v.is_finite())
            .map(|(e, &v)| format!("{:.2},{:.2}", f.px(e as f64 + 1.0), f.py(v)))
            .collect();
        writeln!(
            out,
            r#"<polyline stroke="{}" points="{}"/>"#,
            PALETTE[i % PALETTE.len()],
            pts.join(" ")
        )
        .ok();
    }
    writeln!(out, "</g>").ok();
    let entries: Vec<(String, &str)> = series
        .iter()
        .enumerate()
        .map(|(i, s)| (s.name.clone(), PALETTE[i % PALETTE.len()]))
        .collect();
    legend(out, &entries);
    Ok(())
}

fn label_grid(
    out: &mut String,
    kind: PlotKind,
    title: &str,
    labels: &Array2<usize>,
    x_range: (f64, f64),
    y_range: (f64, f64),
    points: &[(f64, f64, usize)],
) -> CliResult<()> {
    let (ny, nx) = labels.dim();
    if nx == 0 || ny == 0 {
        return Err(CliError::Plot("label grid is empty".into()));
    }
    // Cells are centred on the lattice points.
    let dx = if nx > 1 { (x_range.1 - x_range.0) / (nx - 1) as f64 } else { 1.0 };
    let dy = if ny > 1 { (y_range.1 - y_range.0) / (ny - 1) as f64 } else { 1.0 };
    let f = Frame {
        x0: x_range.0 - dx / 2.0,
        x1: x_range.1 + dx / 2.0,
        y0: y_range.0 - dy / 2.0,
        y1: y_range.1 + dy / 2.0,
    };
    header(out, title);
    let cw = f.px(f.x0 + dx) - f.px(f.x0);
    let ch = f.py(f.y0) - f.py(f.y0 + dy);
    writeln!(out, r#"<g id="cells" shape-rendering="crispEdges">"#).ok();
    for iy in 0..ny {
        for ix in 0..nx {
            let cx = x_range.0 + dx * ix as f64;
            let cy = y_range.0 + dy * iy as f64;
            writeln!(
                out,
                r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{}"/>"#,
                f.px(cx - dx / 2.0),
                f.py(cy + dy / 2.0),
                cw,
                ch,
                CELL_PALETTE[labels[(iy, ix)] % CELL_PALETTE.len()]
            )
            .ok();
        }
    }
    writeln!(out, "</g>").ok();
    if !points.is_empty() {
        writeln!(out, r#"<g id="points">"#).ok();
        for &(x, y, c) in points {
            writeln!(
                out,
                r#"<circle cx="{:.2}" cy="{:.2}" r="1.8" fill="{}"/>"#,
                f.px(x),
                f.py(y),
                PALETTE[c % PALETTE.len()]
            )
            .ok();
        }
        writeln!(out, "</g>").ok();
    }
    axes(out, &f, "x0", "x1");
    let k = labels.iter().copied().max().unwrap_or(0) + 1;
    let word = if kind == PlotKind::GatePartition { "expert" } else { "class" };
    let entries: Vec<(String, &str)> = (0..k)
        .map(|c| (format!("{word} {c}"), CELL_PALETTE[c % CELL_PALETTE.len()]))
        .collect();
    legend(out, &entries);
    Ok(())
}

fn reliability(out: &mut String, title: &str, bins: &ReliabilityBins) -> CliResult<()> {
    if bins.bins.len() != bins.n_bins || bins.n_bins == 0 {
        return Err(CliError::Plot("reliability bins are inconsistent".into()));
    }
    let f = Frame {
        x0: 0.0,
        x1: 1.0,
        y0: 0.0,
        y1: 1.0,
    };
    header(out, title);
    axes(out, &f, "confidence", "accuracy");
    writeln!(
        out,
        r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="gray" stroke-dasharray="4 3"/>"#,
        f.px(0.0),
        f.py(0.0),
        f.px(1.0),
        f.py(1.0)
    )
    .ok();
    writeln!(out, r#"<g id="bars">"#).ok();
    for b in &bins.bins {
        let w = (f.px(b.hi) - f.px(b.lo)) / 2.0;
        for (k, v) in [b.mean_confidence, b.accuracy].into_iter().enumerate() {
            writeln!(
                out,
                r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{}"/>"#,
                f.px(b.lo) + w * k as f64,
                f.py(v),
                w,
                f.py(0.0) - f.py(v),
                PALETTE[k]
            )
            .ok();
        }
    }
    writeln!(out, "</g>").ok();
    legend(
        out,
        &[("confidence".to_string(), PALETTE[0]), ("accuracy".to_string(), PALETTE[1])],
    );
    Ok(())
}

/// Renders `data` as an SVG document.
pub fn render_svg(kind: PlotKind, data: &PlotData) -> CliResult<String> {
    let mut out = String::new();
    match (kind, data) {
        (PlotKind::LossCurves | PlotKind::AccuracyCurves, PlotData::Curves { title, series }) => {
            curves(&mut out, kind, title, series)?
        }
        (
            PlotKind::BoundaryMap | PlotKind::GatePartition,
            PlotData::LabelGrid {
                title,
                labels,
                x_range,
                y_range,
                points,
            },
        ) => label_grid(&mut out, kind, title, labels, *x_range, *y_range, points)?,
        (PlotKind::ReliabilityDiagram, PlotData::Reliability { title, bins }) => reliability(&mut out, title, bins)?,
        _ => return Err(CliError::Plot(format!("{kind:?} cannot draw this data"))),
    }
    out.push_str("</svg>\n");
    Ok(out)
}

pub fn emit_svg(kind: PlotKind, data: &PlotData, path: impl AsRef<Path>) -> CliResult<()> {
    let path = path.as_ref();
    let text = render_svg(kind, data)?;
    std::fs::write(path, text).map_err(|e| CliError::Io(path.display().to_string(), e))
}
