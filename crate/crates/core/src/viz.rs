//! SVG line plots with relevance-coloured segments.
//!
//! Colours use a diverging scale normalized by the largest absolute
//! relevance on the plot. With `a = |R| / bound`:
//!
//! * positive relevance: `(2a, 0, 0)` for `a <= 0.5`, then `(1, 2a - 1, 0)`,
//!   i.e. black through red to yellow;
//! * negative relevance: the same ramp with red and blue swapped, black
//!   through blue to cyan;
//! * zero is black.

use std::fmt::Write as _;
use std::ops::Range;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::dataset::GaitSample;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Rgb(pub u8, pub u8, pub u8);

impl Rgb {
    pub const BLACK: Rgb = Rgb(0, 0, 0);

    pub fn hex(self) -> String {
        format!("#{:02x}{:02x}{:02x}", self.0, self.1, self.2)
    }

    /// Swaps the red and blue channels.
    pub fn mirror(self) -> Rgb {
        Rgb(self.2, self.1, self.0)
    }
}

fn channel(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Colour of a relevance value already divided by the plot bound.
pub fn color(normalized: f64) -> Rgb {
    if !normalized.is_finite() || normalized == 0.0 {
        return Rgb::BLACK;
    }
    let a = normalized.abs().min(1.0);
    let hot = if a <= 0.5 {
        Rgb(channel(2.0 * a), 0, 0)
    } else {
        Rgb(255, channel(2.0 * a - 1.0), 0)
    };
    if normalized > 0.0 {
        hot
    } else {
        hot.mirror()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotSpec {
    /// Channels to draw; `None` draws all of them.
    pub channels: Option<Vec<usize>>,
    pub channel_names: Option<Vec<String>>,
    /// Panels per row.
    pub columns: usize,
    /// Time-index intervals drawn as shaded background.
    pub stance: Vec<Range<usize>>,
    pub highlight_max: bool,
    pub panel_width: f64,
    pub panel_height: f64,
    pub title: Option<String>,
}

impl Default for PlotSpec {
    fn default() -> Self {
        PlotSpec {
            channels: None,
            channel_names: None,
            columns: 3,
            stance: Vec::new(),
            highlight_max: true,
            panel_width: 240.0,
            panel_height: 120.0,
            title: None,
        }
    }
}

impl PlotSpec {
    fn selected(&self, available: usize) -> Result<Vec<usize>> {
        let chans = match &self.channels {
            Some(c) => c.clone(),
            None => (0..available).collect(),
        };
        if chans.is_empty() {
            return Err(Error::InvalidConfig("no channels selected for plotting".into()));
        }
        if let Some(&c) = chans.iter().find(|&&c| c >= available) {
            return Err(Error::InvalidConfig(format!(
                "channel {c} selected but the sample has {available}"
            )));
        }
        if self.columns == 0 || !(self.panel_width > 0.0 && self.panel_height > 0.0) {
            return Err(Error::InvalidConfig("plot layout must be positive".into()));
        }
        Ok(chans)
    }

    fn label(&self, c: usize) -> String {
        self.channel_names
            .as_ref()
            .and_then(|n| n.get(c).cloned())
            .unwrap_or_else(|| format!("channel {c}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeakRelevance {
    pub channel: usize,
    pub time_index: usize,
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    /// First half of the channels.
    First,
    /// Second half of the channels.
    Second,
}

/// Machine-readable companion of a rendered plot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub bound: f64,
    pub channels: Vec<PeakRelevance>,
    pub sides: Vec<(Side, PeakRelevance)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Plot {
    pub svg: String,
    pub sidecar: Sidecar,
}

/// Relevance of the segment between t and t + 1.
fn segment_relevance(r: &Array2<f64>, c: usize, t: usize) -> f64 {
    0.5 * (r[[c, t]] + r[[c, t + 1]])
}

fn bound(r: &Array2<f64>, chans: &[usize]) -> f64 {
    chans
        .iter()
        .flat_map(|&c| r.row(c).to_vec())
        .fold(0.0, |m: f64, v| m.max(v.abs()))
}

fn peak(r: &Array2<f64>, c: usize) -> PeakRelevance {
    let row = r.row(c);
    let mut best = 0;
    for (t, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = t;
        }
    }
    PeakRelevance {
        channel: c,
        time_index: best,
        value: row[best],
    }
}

fn side_of(c: usize, channels: usize) -> Side {
    if c < channels.div_ceil(2) {
        Side::First
    } else {
        Side::Second
    }
}

struct Panel<'a> {
    values: &'a Array2<f64>,
    relevance: &'a Array2<f64>,
    channel: usize,
    x: f64,
    y: f64,
    label: String,
    marker: Option<usize>,
}

fn draw_panel(out: &mut String, p: &Panel, spec: &PlotSpec, bound: f64) {
    let (w, h) = (spec.panel_width, spec.panel_height);
    let (pad_l, pad_r, pad_t, pad_b) = (8.0, 8.0, 18.0, 8.0);
    let t_len = p.values.ncols();
    let row = p.values.row(p.channel);
    let (lo, hi) = row
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let span = if hi > lo { hi - lo } else { 1.0 };
    let px = |t: usize| p.x + pad_l + (w - pad_l - pad_r) * t as f64 / (t_len - 1).max(1) as f64;
    let py = |v: f64| p.y + pad_t + (h - pad_t - pad_b) * (hi - v) / span;

    let _ = writeln!(
        out,
        r##"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="#ffffff" stroke="#cccccc"/>"##,
        p.x, p.y, w, h
    );
    for s in &spec.stance {
        let (a, b) = (s.start.min(t_len - 1), s.end.min(t_len - 1));
        if b > a {
            let _ = writeln!(
                out,
                r##"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="#e6e6e6"/>"##,
                px(a),
                p.y + pad_t,
                px(b) - px(a),
                h - pad_t - pad_b
            );
        }
    }
    let _ = writeln!(
        out,
        r##"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="11" fill="#000000">{}</text>"##,
        p.x + pad_l,
        p.y + 13.0,
        escape(&p.label)
    );
    for t in 0..t_len.saturating_sub(1) {
        let r = segment_relevance(p.relevance, p.channel, t);
        let c = if bound > 0.0 { color(r / bound) } else { Rgb::BLACK };
        let _ = writeln!(
            out,
            r#"<path d="M{:.2} {:.2} L{:.2} {:.2}" stroke="{}" stroke-width="2" fill="none"/>"#,
            px(t),
            py(row[t]),
            px(t + 1),
            py(row[t + 1]),
            c.hex()
        );
    }
    if let Some(t) = p.marker {
        let _ = writeln!(
            out,
            r##"<circle cx="{:.2}" cy="{:.2}" r="5" fill="none" stroke="#ff0000" stroke-width="1.5"/>"##,
            px(t),
            py(row[t])
        );
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn document(width: f64, height: f64, body: &str, title: Option<&str>) -> String {
    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}">"#
    );
    if let Some(t) = title {
        let _ = writeln!(
            s,
            r##"<text x="8" y="16" font-family="sans-serif" font-size="13" fill="#000000">{}</text>"##,
            escape(t)
        );
    }
    s.push_str(body);
    s.push_str("</svg>\n");
    s
}

fn check_shapes(sample: &GaitSample, relevance: &Array2<f64>) -> Result<()> {
    if sample.values.dim() != relevance.dim() {
        return Err(Error::Shape(format!(
            "sample is {:?} but relevance is {:?}",
            sample.values.dim(),
            relevance.dim()
        )));
    }
    if sample.time_points() < 2 {
        return Err(Error::Shape("need at least two time points to draw".into()));
    }
    Ok(())
}

/// One panel per selected channel, laid out `spec.columns` to a row.
pub fn render_relevance_plot(sample: &GaitSample, relevance: &Array2<f64>, spec: &PlotSpec) -> Result<Plot> {
    check_shapes(sample, relevance)?;
    let chans = spec.selected(sample.channels())?;
    let bound = bound(relevance, &chans);
    let channels: Vec<PeakRelevance> = chans.iter().map(|&c| peak(relevance, c)).collect();
    let mut sides: Vec<(Side, PeakRelevance)> = Vec::new();
    for side in [Side::First, Side::Second] {
        let best = channels
            .iter()
            .filter(|p| side_of(p.channel, sample.channels()) == side)
            .fold(None::<PeakRelevance>, |b, p| match b {
                Some(b) if b.value >= p.value => Some(b),
                _ => Some(*p),
            });
        if let Some(b) = best {
            sides.push((side, b));
        }
    }

    let top = if spec.title.is_some() { 24.0 } else { 0.0 };
    let rows = chans.len().div_ceil(spec.columns);
    let cols = spec.columns.min(chans.len());
    let mut body = String::new();
    for (k, &c) in chans.iter().enumerate() {
        let marker = spec
            .highlight_max
            .then(|| sides.iter().find(|(_, p)| p.channel == c).map(|(_, p)| p.time_index))
            .flatten();
        draw_panel(
            &mut body,
            &Panel {
                values: &sample.values,
                relevance,
                channel: c,
                x: (k % spec.columns) as f64 * spec.panel_width,
                y: top + (k / spec.columns) as f64 * spec.panel_height,
                label: spec.label(c),
                marker,
            },
            spec,
            bound,
        );
    }
    let svg = document(
        cols as f64 * spec.panel_width,
        top + rows as f64 * spec.panel_height,
        &body,
        spec.title.as_deref(),
    );
    Ok(Plot {
        svg,
        sidecar: Sidecar {
            bound,
            channels,
            sides,
        },
    })
}

/// Small multiples: one row per trial, one column per selected channel,
/// all sharing a single colour normalization.
pub fn render_curve_grid(trials: &[(&GaitSample, &Array2<f64>)], spec: &PlotSpec) -> Result<String> {
    let (first, _) = trials
        .first()
        .ok_or_else(|| Error::InvalidConfig("curve grid needs at least one trial".into()))?;
    let chans = spec.selected(first.channels())?;
    for (s, r) in trials {
        check_shapes(s, r)?;
        if s.channels() != first.channels() {
            return Err(Error::Shape("trials in a grid must share their channel count".into()));
        }
    }
    let bound = trials.iter().map(|(_, r)| bound(r, &chans)).fold(0.0, f64::max);
    let top = if spec.title.is_some() { 24.0 } else { 0.0 };
    let mut body = String::new();
    for (row, (s, r)) in trials.iter().enumerate() {
        for (col, &c) in chans.iter().enumerate() {
            let marker = spec.highlight_max.then(|| peak(r, c).time_index);
            draw_panel(
                &mut body,
                &Panel {
                    values: &s.values,
                    relevance: r,
                    channel: c,
                    x: col as f64 * spec.panel_width,
                    y: top + row as f64 * spec.panel_height,
                    label: format!("{} / trial {}", spec.label(c), s.trial_id),
                    marker,
                },
                spec,
                bound,
            );
        }
    }
    Ok(document(
        chans.len() as f64 * spec.panel_width,
        top + trials.len() as f64 * spec.panel_height,
        &body,
        spec.title.as_deref(),
    ))
}

/// Stroke colours of all segments in document order.
pub fn segment_colors(svg: &str) -> Vec<String> {
    svg.lines()
        .filter(|l| l.starts_with("<path"))
        .filter_map(|l| l.split("stroke=\"").nth(1))
        .map(|rest| rest[..7].to_string())
        .collect()
}
