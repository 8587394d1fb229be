use std::path::Path;
use std::str::FromStr;

use chrono::NaiveDateTime;
use serde_json::{json, Map, Value};

use super::{ContinuousHypnogram, HypnogramChannel};
use crate::error::{Error, Result};
use crate::turning::TurningParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ExportFormat {
    Csv,
    Json,
    Svg,
}

impl ExportFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ExportFormat::Csv => "csv",
            ExportFormat::Json => "json",
            ExportFormat::Svg => "svg",
        }
    }
}

impl FromStr for ExportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "csv" => Ok(ExportFormat::Csv),
            "json" => Ok(ExportFormat::Json),
            "svg" => Ok(ExportFormat::Svg),
            other => Err(Error::Config(format!("unknown export format {other:?}"))),
        }
    }
}

const TIME_FORMAT: &str = "%Y-%m-%dT%H:%M:%S";
const TIME_FORMAT_MS: &str = "%Y-%m-%dT%H:%M:%S%.3f";

fn timestamp(h: &ContinuousHypnogram, index: usize) -> String {
    let fmt = if h.step_s.fract() == 0.0 { TIME_FORMAT } else { TIME_FORMAT_MS };
    h.time_at(index).format(fmt).to_string()
}

/// One row per epoch: ISO-8601 time, then one column per channel. Missing
/// values are empty fields.
pub fn to_csv(h: &ContinuousHypnogram) -> Result<String> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(vec![]);
    let csv_err = |e: csv::Error| Error::Csv(e.to_string());
    let mut header = vec!["time".to_string()];
    header.extend(h.channels.iter().map(|c| c.label.clone()));
    w.write_record(&header).map_err(csv_err)?;
    for i in 0..h.len() {
        let mut row = vec![timestamp(h, i)];
        row.extend(
            h.channels
                .iter()
                .map(|c| c.smoothed[i].map(|v| v.to_string()).unwrap_or_default()),
        );
        w.write_record(&row).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Csv(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("CSV output is UTF-8"))
}

/// Parses a hypnogram CSV as written by [`to_csv`]. The result carries the
/// smoothed values only; turning parameters are reported as defaults and
/// `ma_length` as 1.
pub fn read_csv(text: &str) -> Result<ContinuousHypnogram> {
    let mut r = csv::ReaderBuilder::new().from_reader(text.as_bytes());
    let csv_err = |e: csv::Error| Error::Csv(e.to_string());
    let header = r.headers().map_err(csv_err)?.clone();
    if header.get(0) != Some("time") || header.len() < 2 {
        return Err(Error::Csv("expected a `time` column followed by channels".into()));
    }
    let labels: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    let mut times: Vec<NaiveDateTime> = Vec::new();
    let mut columns: Vec<Vec<Option<f64>>> = vec![Vec::new(); labels.len()];
    for (row_no, rec) in r.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let line = row_no + 2;
        let t = rec.get(0).unwrap_or_default();
        let time = NaiveDateTime::parse_from_str(t, TIME_FORMAT_MS)
            .or_else(|_| NaiveDateTime::parse_from_str(t, TIME_FORMAT))
            .map_err(|_| Error::Csv(format!("line {line}: bad timestamp {t:?}")))?;
        times.push(time);
        for (k, col) in columns.iter_mut().enumerate() {
            let field = rec.get(k + 1).unwrap_or_default().trim();
            col.push(if field.is_empty() {
                None
            } else {
                Some(field.parse().map_err(|_| {
                    Error::Csv(format!("line {line}: bad value {field:?} in {}", labels[k]))
                })?)
            });
        }
    }
    let start_time = *times.first().ok_or_else(|| Error::Csv("no data rows".into()))?;
    let step_s = match times.get(1) {
        Some(t) => (*t - start_time).num_milliseconds() as f64 / 1000.0,
        None => 1.0,
    };
    if step_s <= 0.0 {
        return Err(Error::Csv("timestamps must increase".into()));
    }
    let n = times.len();
    Ok(ContinuousHypnogram {
        start_time,
        step_s,
        ma_length: 1,
        params: TurningParams::default(),
        channels: labels
            .into_iter()
            .zip(columns)
            .map(|(label, smoothed)| HypnogramChannel {
                label,
                raw: Vec::new(),
                smoothed,
                quality: None,
            })
            .collect(),
        edge_flags: vec![false; n],
    })
}

/// JSON document `{meta, quality, channels, edge_flags}`; channels map each
/// label to its smoothed values with `null` for missing.
pub fn to_json(h: &ContinuousHypnogram) -> Result<String> {
    let mut channels = Map::new();
    let mut quality = Map::new();
    for c in &h.channels {
        channels.insert(c.label.clone(), json!(c.smoothed));
        if let Some(q) = &c.quality {
            quality.insert(
                c.label.clone(),
                serde_json::to_value(q).map_err(|e| Error::Json(e.to_string()))?,
            );
        }
    }
    let doc = json!({
        "meta": {
            "start_time": h.start_time.format(TIME_FORMAT).to_string(),
            "step_s": h.step_s,
            "d": h.params.delay,
            "tie_policy": h.params.tie_policy,
            "ma_length": h.ma_length,
            "n_epochs": h.len(),
        },
        "quality": Value::Object(quality),
        "channels": Value::Object(channels),
        "edge_flags": h.edge_flags,
    });
    let mut s = serde_json::to_string_pretty(&doc).map_err(|e| Error::Json(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

/// Writes `h` to `path` in the given format. SVG output uses default
/// options without stage strips; see [`super::to_svg`] for overlays.
pub fn export(h: &ContinuousHypnogram, format: ExportFormat, path: impl AsRef<Path>) -> Result<()> {
    if h.is_empty() || h.channels.is_empty() {
        return Err(Error::Config("cannot export an empty hypnogram".into()));
    }
    let text = match format {
        ExportFormat::Csv => to_csv(h)?,
        ExportFormat::Json => to_json(h)?,
        ExportFormat::Svg => super::to_svg(h, &super::SvgOptions::default()),
    };
    let path = path.as_ref();
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
