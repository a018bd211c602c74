//! Static SVG 1.1 rendering of tidy outputs.
//!
//! Output is a pure function of the input tables: coordinates are written
//! with two decimals and elements are emitted in table order. Heatmaps use a
//! diverging ramp symmetric about zero, from `#2166ac` (most negative) via
//! `#f7f7f7` (zero) to `#b2182b` (most positive), with a legend strip.

use std::fmt::Write as _;
use std::path::PathBuf;

use gamforge::diagnostics::Appraisal;
use gamforge::{Column, TidyTable};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RenderError {
    #[error("{kind} plot: {message}")]
    Incompatible { kind: PlotKind, message: String },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotKind {
    BasisCurves,
    PenaltyHeatmap,
    Smooth1dRibbon,
    Smooth2dHeatmap,
    AppraiseGrid,
}

impl std::fmt::Display for PlotKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            PlotKind::BasisCurves => "basis_curves",
            PlotKind::PenaltyHeatmap => "penalty_heatmap",
            PlotKind::Smooth1dRibbon => "smooth_1d_ribbon",
            PlotKind::Smooth2dHeatmap => "smooth_2d_heatmap",
            PlotKind::AppraiseGrid => "appraise_grid",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlotSpec {
    pub kind: PlotKind,
    pub width: u32,
    pub height: u32,
    pub output: PathBuf,
}

impl PlotSpec {
    pub fn new(kind: PlotKind, output: impl Into<PathBuf>) -> Self {
        let (width, height) = match kind {
            PlotKind::AppraiseGrid => (800, 800),
            PlotKind::PenaltyHeatmap | PlotKind::Smooth2dHeatmap => (560, 480),
            _ => (640, 420),
        };
        PlotSpec {
            kind,
            width,
            height,
            output: output.into(),
        }
    }

    pub fn write(&self, svg: &str) -> Result<(), RenderError> {
        std::fs::write(&self.output, svg)?;
        Ok(())
    }
}

fn incompatible(kind: PlotKind, message: impl Into<String>) -> RenderError {
    RenderError::Incompatible {
        kind,
        message: message.into(),
    }
}

/// Two-decimal coordinate; never prints `-0.00`.
fn n2(x: f64) -> String {
    let s = format!("{x:.2}");
    if s == "-0.00" {
        "0.00".into()
    } else {
        s
    }
}

/// Short tick label.
fn tick(x: f64) -> String {
    let s = format!("{x:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.').to_string();
    if s == "-0" {
        "0".into()
    } else {
        s
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn range(values: impl IntoIterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .into_iter()
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        (0.0, 1.0)
    } else if lo == hi {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

/// Linear interpolation in `#rrggbb` space along the diverging ramp;
/// `t` in [-1, 1].
pub fn diverging(t: f64) -> String {
    const NEG: [f64; 3] = [33.0, 102.0, 172.0];
    const MID: [f64; 3] = [247.0, 247.0, 247.0];
    const POS: [f64; 3] = [178.0, 24.0, 43.0];
    let t = if t.is_finite() { t.clamp(-1.0, 1.0) } else { 0.0 };
    let (a, b, u) = if t < 0.0 { (MID, NEG, -t) } else { (MID, POS, t) };
    let c: Vec<u8> = (0..3).map(|i| (a[i] + (b[i] - a[i]) * u).round() as u8).collect();
    format!("#{:02x}{:02x}{:02x}", c[0], c[1], c[2])
}

struct Svg {
    buf: String,
}

impl Svg {
    fn new(width: u32, height: u32) -> Self {
        let mut buf = String::new();
        let _ = writeln!(buf, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
        let _ = writeln!(
            buf,
            r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">"#
        );
        let _ = writeln!(
            buf,
            r#"<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>"#
        );
        Svg { buf }
    }

    fn line(&mut self, class: &str, x1: f64, y1: f64, x2: f64, y2: f64, stroke: &str) {
        let _ = writeln!(
            self.buf,
            r#"<line class="{class}" x1="{}" y1="{}" x2="{}" y2="{}" stroke="{stroke}"/>"#,
            n2(x1),
            n2(y1),
            n2(x2),
            n2(y2)
        );
    }

    fn text(&mut self, x: f64, y: f64, anchor: &str, s: &str) {
        let _ = writeln!(
            self.buf,
            r#"<text x="{}" y="{}" text-anchor="{anchor}">{}</text>"#,
            n2(x),
            n2(y),
            escape(s)
        );
    }

    fn rect(&mut self, class: &str, x: f64, y: f64, w: f64, h: f64, fill: &str) {
        let _ = writeln!(
            self.buf,
            r#"<rect class="{class}" x="{}" y="{}" width="{}" height="{}" fill="{fill}"/>"#,
            n2(x),
            n2(y),
            n2(w.max(0.0)),
            n2(h.max(0.0))
        );
    }

    fn points_attr(pts: &[(f64, f64)]) -> String {
        pts.iter()
            .map(|(x, y)| format!("{},{}", n2(*x), n2(*y)))
            .collect::<Vec<_>>()
            .join(" ")
    }

    fn polyline(&mut self, class: &str, pts: &[(f64, f64)], stroke: &str) {
        let _ = writeln!(
            self.buf,
            r#"<polyline class="{class}" points="{}" fill="none" stroke="{stroke}" stroke-width="1.5"/>"#,
            Self::points_attr(pts)
        );
    }

    fn polygon(&mut self, class: &str, pts: &[(f64, f64)], fill: &str) {
        let _ = writeln!(
            self.buf,
            r#"<polygon class="{class}" points="{}" fill="{fill}" fill-opacity="0.35" stroke="none"/>"#,
            Self::points_attr(pts)
        );
    }

    fn circle(&mut self, x: f64, y: f64, fill: &str) {
        let _ = writeln!(
            self.buf,
            r#"<circle class="point" cx="{}" cy="{}" r="2" fill="{fill}" fill-opacity="0.6"/>"#,
            n2(x),
            n2(y)
        );
    }

    fn finish(mut self) -> String {
        self.buf.push_str("</svg>\n");
        self.buf
    }
}

/// Plot area with data-to-pixel mapping.
#[derive(Clone, Copy)]
struct Frame {
    left: f64,
    top: f64,
    width: f64,
    height: f64,
    x: (f64, f64),
    y: (f64, f64),
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        self.left + (x - self.x.0) / (self.x.1 - self.x.0) * self.width
    }

    fn py(&self, y: f64) -> f64 {
        self.top + self.height - (y - self.y.0) / (self.y.1 - self.y.0) * self.height
    }

    fn axes(&self, svg: &mut Svg, title: &str, xlab: &str, ylab: &str) {
        let bottom = self.top + self.height;
        let right = self.left + self.width;
        svg.line("axis", self.left, bottom, right, bottom, "black");
        svg.line("axis", self.left, self.top, self.left, bottom, "black");
        svg.text(self.left, bottom + 14.0, "start", &tick(self.x.0));
        svg.text(right, bottom + 14.0, "end", &tick(self.x.1));
        svg.text(self.left - 4.0, bottom, "end", &tick(self.y.0));
        svg.text(self.left - 4.0, self.top + 8.0, "end", &tick(self.y.1));
        svg.text(self.left + self.width / 2.0, bottom + 28.0, "middle", xlab);
        svg.text(self.left - 4.0, self.top - 6.0, "start", ylab);
        svg.text(self.left + self.width / 2.0, self.top - 18.0, "middle", title);
    }
}

fn frame_in(x0: f64, y0: f64, w: f64, h: f64, xr: (f64, f64), yr: (f64, f64)) -> Frame {
    Frame {
        left: x0 + 60.0,
        top: y0 + 40.0,
        width: (w - 80.0).max(10.0),
        height: (h - 80.0).max(10.0),
        x: xr,
        y: yr,
    }
}

fn num<'a>(kind: PlotKind, t: &'a TidyTable, name: &str) -> Result<&'a [f64], RenderError> {
    t.num(name).map_err(|e| incompatible(kind, e.to_string()))
}

fn single_smooth(kind: PlotKind, t: &TidyTable) -> Result<String, RenderError> {
    let s = t.strs(".smooth").map_err(|e| incompatible(kind, e.to_string()))?;
    let first = s.first().ok_or_else(|| incompatible(kind, "no rows"))?;
    if s.iter().any(|v| v != first) {
        return Err(incompatible(kind, "expected rows of a single smooth"));
    }
    Ok(first.clone())
}

/// Numeric columns that are not tidy bookkeeping (no leading dot) and hold
/// at least one non-missing value.
fn covariate_columns(t: &TidyTable) -> Vec<(&str, &[f64])> {
    t.columns()
        .filter_map(|(n, c)| match c {
            Column::Num(v) if !n.starts_with('.') && v.iter().any(|x| !x.is_nan()) => Some((n, v.as_slice())),
            _ => None,
        })
        .collect()
}

fn one_covariate(kind: PlotKind, t: &TidyTable) -> Result<(String, Vec<f64>), RenderError> {
    let covs = covariate_columns(t);
    match covs.as_slice() {
        [(n, v)] => Ok((n.to_string(), v.to_vec())),
        _ => Err(incompatible(
            kind,
            format!("needs exactly one covariate column, found {}", covs.len()),
        )),
    }
}

/// One polyline per basis function of a 1-D basis table
/// (`.bf`, `.value`, one covariate).
pub fn basis_curves(t: &TidyTable, spec: &PlotSpec) -> Result<String, RenderError> {
    let kind = PlotKind::BasisCurves;
    let label = single_smooth(kind, t)?;
    let (xname, x) = one_covariate(kind, t)?;
    let bf = t.ints(".bf").map_err(|e| incompatible(kind, e.to_string()))?;
    let v = num(kind, t, ".value")?;
    let (w, h) = (spec.width as f64, spec.height as f64);
    let f = frame_in(0.0, 0.0, w, h, range(x.iter().copied()), range(v.iter().copied()));
    let mut svg = Svg::new(spec.width, spec.height);
    f.axes(&mut svg, &format!("basis functions of {label}"), &xname, "value");
    let mut start = 0;
    let mut curve = 0;
    while start < bf.len() {
        let mut end = start;
        while end < bf.len() && bf[end] == bf[start] {
            end += 1;
        }
        let pts: Vec<(f64, f64)> = (start..end).map(|i| (f.px(x[i]), f.py(v[i]))).collect();
        let colour = diverging(if curve % 2 == 0 { -0.8 } else { 0.8 });
        svg.polyline("curve", &pts, &colour);
        curve += 1;
        start = end;
    }
    Ok(svg.finish())
}

fn legend(svg: &mut Svg, x: f64, y: f64, height: f64, lim: f64) {
    let steps = 11;
    let cell = height / steps as f64;
    for i in 0..steps {
        let t = 1.0 - 2.0 * i as f64 / (steps - 1) as f64;
        svg.rect("legend", x, y + cell * i as f64, 14.0, cell, &diverging(t));
    }
    svg.text(x + 18.0, y + 8.0, "start", &tick(lim));
    svg.text(x + 18.0, y + height / 2.0 + 4.0, "start", "0");
    svg.text(x + 18.0, y + height, "start", &tick(-lim));
}

fn max_abs(v: &[f64]) -> f64 {
    let m = v.iter().filter(|x| x.is_finite()).fold(0.0f64, |m, x| m.max(x.abs()));
    if m > 0.0 {
        m
    } else {
        1.0
    }
}

/// K×K cells of a penalty table (`.row`, `.col`, `.value`, row-major).
pub fn penalty_heatmap(t: &TidyTable, spec: &PlotSpec) -> Result<String, RenderError> {
    let kind = PlotKind::PenaltyHeatmap;
    let label = single_smooth(kind, t)?;
    let v = num(kind, t, ".value")?;
    let k = (v.len() as f64).sqrt().round() as usize;
    if k * k != v.len() || k == 0 {
        return Err(incompatible(
            kind,
            format!("{} cells do not form a square matrix", v.len()),
        ));
    }
    let lim = max_abs(v);
    let (w, h) = (spec.width as f64, spec.height as f64);
    let side = (w - 140.0).min(h - 80.0).max(10.0);
    let cell = side / k as f64;
    let (x0, y0) = (40.0, 50.0);
    let mut svg = Svg::new(spec.width, spec.height);
    svg.text(x0 + side / 2.0, 30.0, "middle", &format!("penalty of {label}"));
    for i in 0..k {
        for j in 0..k {
            let val = v[i * k + j];
            svg.rect(
                "cell",
                x0 + cell * j as f64,
                y0 + cell * i as f64,
                cell,
                cell,
                &diverging(val / lim),
            );
        }
    }
    legend(&mut svg, x0 + side + 20.0, y0, side, lim);
    Ok(svg.finish())
}

/// Estimate line over a shaded credible band for one 1-D smooth
/// (`.estimate`, `.lower_ci`, `.upper_ci`, one covariate).
pub fn smooth_1d_ribbon(t: &TidyTable, spec: &PlotSpec) -> Result<String, RenderError> {
    let kind = PlotKind::Smooth1dRibbon;
    let label = single_smooth(kind, t)?;
    let (xname, x) = one_covariate(kind, t)?;
    let est = num(kind, t, ".estimate")?;
    let lo = num(kind, t, ".lower_ci")?;
    let hi = num(kind, t, ".upper_ci")?;
    let (w, h) = (spec.width as f64, spec.height as f64);
    let f = frame_in(
        0.0,
        0.0,
        w,
        h,
        range(x.iter().copied()),
        range(lo.iter().chain(hi.iter()).copied()),
    );
    let mut svg = Svg::new(spec.width, spec.height);
    f.axes(&mut svg, &label, &xname, "partial effect");
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut band: Vec<(f64, f64)> = order.iter().map(|&i| (f.px(x[i]), f.py(hi[i]))).collect();
    band.extend(order.iter().rev().map(|&i| (f.px(x[i]), f.py(lo[i]))));
    svg.polygon("band", &band, "#2166ac");
    let line: Vec<(f64, f64)> = order.iter().map(|&i| (f.px(x[i]), f.py(est[i]))).collect();
    svg.polyline("estimate", &line, "black");
    Ok(svg.finish())
}

fn distinct_sorted(v: &[f64]) -> Vec<f64> {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    s.dedup();
    s
}

fn cell_extent(sorted: &[f64], value: f64) -> (f64, f64) {
    if sorted.len() < 2 {
        return (value - 0.5, value + 0.5);
    }
    let i = sorted.partition_point(|&s| s < value).min(sorted.len() - 1);
    let left = if i == 0 {
        sorted[1] - sorted[0]
    } else {
        sorted[i] - sorted[i - 1]
    };
    let right = if i + 1 == sorted.len() {
        left
    } else {
        sorted[i + 1] - sorted[i]
    };
    (value - left / 2.0, value + right / 2.0)
}

/// Estimate of a 2-D smooth on a grid as coloured cells
/// (`.estimate`, two covariates).
pub fn smooth_2d_heatmap(t: &TidyTable, spec: &PlotSpec) -> Result<String, RenderError> {
    let kind = PlotKind::Smooth2dHeatmap;
    let label = single_smooth(kind, t)?;
    let covs = covariate_columns(t);
    let [(xn, x), (yn, y)] = covs.as_slice() else {
        return Err(incompatible(
            kind,
            format!("needs exactly two covariate columns, found {}", covs.len()),
        ));
    };
    let est = num(kind, t, ".estimate")?;
    let xs = distinct_sorted(x);
    let ys = distinct_sorted(y);
    let ext_x = (cell_extent(&xs, xs[0]).0, cell_extent(&xs, xs[xs.len() - 1]).1);
    let ext_y = (cell_extent(&ys, ys[0]).0, cell_extent(&ys, ys[ys.len() - 1]).1);
    let lim = max_abs(est);
    let (w, h) = (spec.width as f64, spec.height as f64);
    let f = frame_in(0.0, 0.0, w - 60.0, h, ext_x, ext_y);
    let mut svg = Svg::new(spec.width, spec.height);
    for i in 0..est.len() {
        let (x0, x1) = cell_extent(&xs, x[i]);
        let (y0, y1) = cell_extent(&ys, y[i]);
        svg.rect(
            "cell",
            f.px(x0),
            f.py(y1),
            f.px(x1) - f.px(x0),
            f.py(y0) - f.py(y1),
            &diverging(est[i] / lim),
        );
    }
    f.axes(&mut svg, &label, xn, yn);
    legend(&mut svg, f.left + f.width + 20.0, f.top, f.height, lim);
    Ok(svg.finish())
}

/// Four diagnostic panels: QQ with reference band, residuals against the
/// linear predictor, residual histogram, observed against fitted.
pub fn appraise_grid(a: &Appraisal, spec: &PlotSpec) -> Result<String, RenderError> {
    let kind = PlotKind::AppraiseGrid;
    let (w, h) = (spec.width as f64 / 2.0, spec.height as f64 / 2.0);
    let mut svg = Svg::new(spec.width, spec.height);

    let q = &a.qq.table;
    let th = num(kind, q, "theoretical")?;
    let sa = num(kind, q, "sample")?;
    let bl = num(kind, q, "band_lower")?;
    let bu = num(kind, q, "band_upper")?;
    let yr = range(sa.iter().chain(bl).chain(bu).copied());
    let f = frame_in(0.0, 0.0, w, h, range(th.iter().copied()), yr);
    f.axes(
        &mut svg,
        "QQ plot of deviance residuals",
        "theoretical quantiles",
        "deviance residuals",
    );
    let mut band: Vec<(f64, f64)> = th.iter().zip(bu).map(|(&x, &y)| (f.px(x), f.py(y))).collect();
    band.extend(th.iter().zip(bl).rev().map(|(&x, &y)| (f.px(x), f.py(y))));
    svg.polygon("band", &band, "#2166ac");
    let (lo, hi) = (f.x.0.max(f.y.0), f.x.1.min(f.y.1));
    if lo < hi {
        svg.line("reference", f.px(lo), f.py(lo), f.px(hi), f.py(hi), "#b2182b");
    }
    for (&x, &y) in th.iter().zip(sa) {
        svg.circle(f.px(x), f.py(y), "black");
    }

    let eta = num(kind, &a.resid_vs_eta, ".eta")?;
    let res = num(kind, &a.resid_vs_eta, ".residual")?;
    let f = frame_in(w, 0.0, w, h, range(eta.iter().copied()), range(res.iter().copied()));
    f.axes(
        &mut svg,
        "Residuals vs linear predictor",
        "linear predictor",
        "deviance residuals",
    );
    if f.y.0 < 0.0 && f.y.1 > 0.0 {
        svg.line("reference", f.left, f.py(0.0), f.left + f.width, f.py(0.0), "#b2182b");
    }
    for (&x, &y) in eta.iter().zip(res) {
        svg.circle(f.px(x), f.py(y), "black");
    }

    let left = num(kind, &a.histogram, "bin_left")?;
    let right = num(kind, &a.histogram, "bin_right")?;
    let count = a
        .histogram
        .ints("count")
        .map_err(|e| incompatible(kind, e.to_string()))?;
    let cmax = count.iter().copied().max().unwrap_or(0).max(1) as f64;
    let f = frame_in(0.0, h, w, h, range(left.iter().chain(right).copied()), (0.0, cmax));
    f.axes(&mut svg, "Histogram of residuals", "deviance residuals", "count");
    for ((&l, &r), &c) in left.iter().zip(right).zip(count) {
        let top = f.py(c as f64);
        svg.rect("bar", f.px(l), top, f.px(r) - f.px(l), f.py(0.0) - top, "#9e9e9e");
    }

    let fit = num(kind, &a.obs_vs_fit, ".fitted")?;
    let obs = num(kind, &a.obs_vs_fit, ".observed")?;
    let f = frame_in(w, h, w, h, range(fit.iter().copied()), range(obs.iter().copied()));
    f.axes(&mut svg, "Observed vs fitted values", "fitted values", "response");
    let (lo, hi) = (f.x.0.max(f.y.0), f.x.1.min(f.y.1));
    if lo < hi {
        svg.line("reference", f.px(lo), f.py(lo), f.px(hi), f.py(hi), "#b2182b");
    }
    for (&x, &y) in fit.iter().zip(obs) {
        svg.circle(f.px(x), f.py(y), "black");
    }
    Ok(svg.finish())
}

/// Render a single table with the given spec.
pub fn render_table(t: &TidyTable, spec: &PlotSpec) -> Result<String, RenderError> {
    match spec.kind {
        PlotKind::BasisCurves => basis_curves(t, spec),
        PlotKind::PenaltyHeatmap => penalty_heatmap(t, spec),
        PlotKind::Smooth1dRibbon => smooth_1d_ribbon(t, spec),
        PlotKind::Smooth2dHeatmap => smooth_2d_heatmap(t, spec),
        PlotKind::AppraiseGrid => Err(incompatible(spec.kind, "needs the four appraisal tables")),
    }
}
