use std::fmt::Write;

use super::ContinuousHypnogram;
use crate::ingest::{AnnotationSeries, Stage};

const COLORS: [&str; 6] = ["#1f4e9c", "#c0392b", "#2e8b57", "#8e44ad", "#d35400", "#555555"];

#[derive(Debug, Clone)]
pub struct SvgOptions {
    pub width: u32,
    pub panel_height: u32,
    /// Upper end of the rate axis; defaults to the data maximum rounded up
    /// to a tenth, at least 0.5.
    pub y_max: Option<f64>,
    /// Expert stages drawn as a strip above the curves.
    pub stages: Option<AnnotationSeries>,
}

impl Default for SvgOptions {
    fn default() -> Self {
        SvgOptions {
            width: 1200,
            panel_height: 200,
            y_max: None,
            stages: None,
        }
    }
}

fn stage_color(s: Stage) -> &'static str {
    match s {
        Stage::W => "#f1c40f",
        Stage::Rem => "#e74c3c",
        Stage::S1 => "#aed6f1",
        Stage::S2 => "#5dade2",
        Stage::S3 => "#2874a6",
        Stage::S4 => "#1b2631",
        Stage::Unknown => "#dddddd",
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Static SVG 1.1 chart: one panel per channel, rate against clock time.
pub fn to_svg(h: &ContinuousHypnogram, opts: &SvgOptions) -> String {
    let left = 60.0;
    let right = 20.0;
    let top = 20.0;
    let strip = if opts.stages.is_some() { 30.0 } else { 0.0 };
    let gap = 30.0;
    let panel = f64::from(opts.panel_height);
    let width = f64::from(opts.width);
    let plot_w = width - left - right;
    let n_panels = h.channels.len().max(1) as f64;
    let height = top + strip + n_panels * (panel + gap) + 20.0;
    let duration = (h.len() as f64 * h.step_s).max(h.step_s);

    let data_max = h
        .channels
        .iter()
        .flat_map(|c| c.smoothed.iter().flatten())
        .fold(0.0f64, |a, &b| a.max(b));
    let y_max = opts.y_max.unwrap_or_else(|| ((data_max * 10.0).ceil() / 10.0).max(0.5));
    let x_of = |t_s: f64| left + plot_w * t_s / duration;

    let mut out = String::new();
    let _ = writeln!(out, r#"<?xml version="1.0" encoding="UTF-8" standalone="no"?>"#);
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{}" height="{:.0}" viewBox="0 0 {} {:.0}" font-family="sans-serif" font-size="11">"#,
        opts.width, height, opts.width, height
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);

    if let Some(stages) = &opts.stages {
        let y = top;
        for (i, s) in stages.labels.iter().enumerate() {
            let t0 = stages.start_offset_s + i as f64 * stages.epoch_len_s;
            let t1 = (t0 + stages.epoch_len_s).min(duration);
            if t0 >= duration {
                break;
            }
            let _ = writeln!(
                out,
                r#"<rect x="{:.2}" y="{y:.1}" width="{:.2}" height="20" fill="{}"><title>{s}</title></rect>"#,
                x_of(t0),
                (x_of(t1) - x_of(t0)).max(0.1),
                stage_color(*s)
            );
        }
    }

    // Hour ticks at whole clock hours.
    use chrono::Timelike;
    let start = h.start_time;
    let first_tick = 3600.0 - f64::from(start.num_seconds_from_midnight() % 3600);
    let tick_every = if duration > 6.0 * 3600.0 { 3600.0 } else if duration > 3600.0 { 1800.0 } else { 300.0 };
    let first_tick = first_tick % tick_every;

    for (k, ch) in h.channels.iter().enumerate() {
        let y0 = top + strip + k as f64 * (panel + gap) + 10.0;
        let y_of = |v: f64| y0 + panel * (1.0 - (v / y_max).clamp(0.0, 1.0));
        let color = COLORS[k % COLORS.len()];
        let _ = writeln!(
            out,
            r##"<g><rect x="{left}" y="{y0:.1}" width="{plot_w:.1}" height="{panel:.1}" fill="none" stroke="#999"/>"##
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" fill="{color}">{}</text>"#,
            left + 4.0,
            y0 + 12.0,
            escape(&ch.label)
        );
        let mut v = 0.0;
        while v <= y_max + 1e-9 {
            let _ = writeln!(
                out,
                r##"<line x1="{:.1}" x2="{left}" y1="{y:.2}" y2="{y:.2}" stroke="#999"/><text x="{:.1}" y="{:.2}" text-anchor="end">{v:.1}</text>"##,
                left - 4.0,
                left - 6.0,
                y_of(v) + 4.0,
                y = y_of(v)
            );
            v += 0.1;
        }
        let mut t = first_tick;
        while t <= duration {
            let x = x_of(t);
            let label = (start + chrono::Duration::seconds(t.round() as i64)).format("%H:%M");
            let _ = writeln!(
                out,
                r##"<line x1="{x:.2}" x2="{x:.2}" y1="{:.1}" y2="{:.1}" stroke="#999"/><text x="{x:.2}" y="{:.1}" text-anchor="middle">{label}</text>"##,
                y0 + panel,
                y0 + panel + 4.0,
                y0 + panel + 16.0
            );
            t += tick_every;
        }
        // Missing values break the line into separate polylines.
        let mut points = String::new();
        let flush = |points: &mut String, out: &mut String| {
            if !points.is_empty() {
                let _ = writeln!(
                    out,
                    r#"<polyline fill="none" stroke="{color}" stroke-width="1" points="{}"/>"#,
                    points.trim_end()
                );
                points.clear();
            }
        };
        for (i, v) in ch.smoothed.iter().enumerate() {
            match v {
                Some(v) => {
                    let _ = write!(points, "{:.2},{:.2} ", x_of((i as f64 + 0.5) * h.step_s), y_of(*v));
                }
                None => flush(&mut points, &mut out),
            }
        }
        flush(&mut points, &mut out);
        let _ = writeln!(out, "</g>");
    }
    let _ = writeln!(out, "</svg>");
    out
}
