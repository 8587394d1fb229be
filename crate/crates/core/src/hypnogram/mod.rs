//! Continuous hypnograms: per-channel 1 s turning rates smoothed by a
//! centered moving average on a common time base.

mod export;
mod svg;

pub use export::{export, read_csv, to_csv, to_json, ExportFormat};
pub use svg::{to_svg, SvgOptions};

use std::str::FromStr;

use chrono::NaiveDateTime;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{derive_bipolar, EdfRecord, QualityReport, SignalSeries};
use crate::turning::{epoch_rates, TurningParams};

pub const DEFAULT_MA_LENGTH: usize = 31;

/// Output of [`moving_average`].
#[derive(Debug, Clone, PartialEq)]
pub struct Smoothed {
    pub values: Vec<Option<f64>>,
    /// True where the window was cut short by either end of the series.
    pub edge: Vec<bool>,
}

/// Centered moving average of odd length `len` over the present values.
///
/// Missing values are skipped; a window without present values yields
/// `None`. Near the ends the window shrinks to the available positions.
pub fn moving_average(values: &[Option<f64>], len: usize) -> Result<Smoothed> {
    if len == 0 || len % 2 == 0 {
        return Err(Error::param("ma_length", format!("must be odd and positive, got {len}")));
    }
    let half = len / 2;
    let n = values.len();
    let mut out = Vec::with_capacity(n);
    let mut edge = Vec::with_capacity(n);
    for i in 0..n {
        let lo = i.saturating_sub(half);
        let hi = (i + half + 1).min(n);
        let (sum, count) = values[lo..hi]
            .iter()
            .flatten()
            .fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
        out.push((count > 0).then(|| sum / count as f64));
        edge.push(i < half || i + half >= n);
    }
    Ok(Smoothed { values: out, edge })
}

/// How a hypnogram channel is obtained from a record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ChannelSpec {
    /// A signal label. Resolved against raw signals first (ignoring case and
    /// punctuation, so `Fp2F4` matches `FP2-F4`); failing that, `A-B` is
    /// derived as the bipolar difference of raw signals `A` and `B`.
    Named(String),
    Bipolar(String, String),
}

impl FromStr for ChannelSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.is_empty() {
            return Err(Error::Config("empty channel name".into()));
        }
        Ok(ChannelSpec::Named(s.to_string()))
    }
}

impl std::fmt::Display for ChannelSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ChannelSpec::Named(s) => f.write_str(s),
            ChannelSpec::Bipolar(a, b) => write!(f, "{a}-{b}"),
        }
    }
}

fn normalize(label: &str) -> String {
    label
        .chars()
        .filter(char::is_ascii_alphanumeric)
        .map(|c| c.to_ascii_lowercase())
        .collect()
}

fn find_raw<'a>(record: &'a EdfRecord, label: &str) -> Option<&'a SignalSeries> {
    record.signal(label).or_else(|| {
        let key = normalize(label);
        record.signals.iter().find(|s| normalize(&s.label) == key)
    })
}

impl ChannelSpec {
    pub fn resolve(&self, record: &EdfRecord) -> Result<SignalSeries> {
        let bipolar = |a: &str, b: &str| -> Option<Result<SignalSeries>> {
            let (sa, sb) = (find_raw(record, a)?, find_raw(record, b)?);
            Some(derive_bipolar(sa, sb).map(|mut s| {
                s.label = format!("{a}-{b}");
                s
            }))
        };
        match self {
            ChannelSpec::Named(name) => {
                if let Some(s) = find_raw(record, name) {
                    let mut s = s.clone();
                    s.label = name.clone();
                    return Ok(s);
                }
                for (i, _) in name.match_indices('-') {
                    if let Some(r) = bipolar(&name[..i], &name[i + 1..]) {
                        return r.map(|mut s| {
                            s.label = name.clone();
                            s
                        });
                    }
                }
                Err(Error::UnknownChannel(name.clone()))
            }
            ChannelSpec::Bipolar(a, b) => {
                bipolar(a, b).unwrap_or_else(|| Err(Error::UnknownChannel(format!("{a}-{b}"))))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypnogramChannel {
    pub label: String,
    /// Unsmoothed per-epoch rates; empty when the hypnogram was imported
    /// from a file that only carries smoothed values.
    pub raw: Vec<Option<f64>>,
    pub smoothed: Vec<Option<f64>>,
    pub quality: Option<QualityReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuousHypnogram {
    pub start_time: NaiveDateTime,
    pub step_s: f64,
    pub ma_length: usize,
    pub params: TurningParams,
    pub channels: Vec<HypnogramChannel>,
    pub edge_flags: Vec<bool>,
}

impl ContinuousHypnogram {
    pub fn len(&self) -> usize {
        self.edge_flags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edge_flags.is_empty()
    }

    pub fn channel(&self, label: &str) -> Option<&HypnogramChannel> {
        self.channels.iter().find(|c| c.label == label).or_else(|| {
            let key = normalize(label);
            self.channels.iter().find(|c| normalize(&c.label) == key)
        })
    }

    /// Smoothed values of a channel, or [`Error::UnknownChannel`].
    pub fn values(&self, label: &str) -> Result<&[Option<f64>]> {
        self.channel(label)
            .map(|c| c.smoothed.as_slice())
            .ok_or_else(|| Error::UnknownChannel(label.to_string()))
    }

    pub fn labels(&self) -> Vec<&str> {
        self.channels.iter().map(|c| c.label.as_str()).collect()
    }

    pub fn time_at(&self, index: usize) -> NaiveDateTime {
        let ms = (index as f64 * self.step_s * 1000.0).round() as i64;
        self.start_time + chrono::Duration::milliseconds(ms)
    }
}

/// Turning rates then smoothing for each signal, aligned at `start_time`.
/// Signals must share one duration; they may differ in sampling rate.
pub fn hypnogram_from_signals(
    start_time: NaiveDateTime,
    signals: &[SignalSeries],
    params: &TurningParams,
    epoch_len_s: f64,
    ma_length: usize,
) -> Result<ContinuousHypnogram> {
    if signals.is_empty() {
        return Err(Error::Config("no channels requested".into()));
    }
    if ma_length == 0 || ma_length % 2 == 0 {
        return Err(Error::param("ma_length", format!("must be odd and positive, got {ma_length}")));
    }
    let first = &signals[0];
    for s in &signals[1..] {
        if (s.duration_s() - first.duration_s()).abs() > 1.0 / s.fs.min(first.fs) {
            return Err(Error::Length(format!(
                "channel {} lasts {} s but {} lasts {} s",
                s.label,
                s.duration_s(),
                first.label,
                first.duration_s()
            )));
        }
    }

    let channels: Vec<HypnogramChannel> = signals
        .par_iter()
        .map(|s| {
            let epochs = epoch_rates(s, epoch_len_s, params)?;
            let smoothed = moving_average(&epochs.rates, ma_length)?;
            Ok(HypnogramChannel {
                label: s.label.clone(),
                raw: epochs.rates,
                smoothed: smoothed.values,
                quality: Some(s.quality.clone()),
            })
        })
        .collect::<Result<_>>()?;

    let n = channels[0].smoothed.len();
    if let Some(c) = channels.iter().find(|c| c.smoothed.len() != n) {
        return Err(Error::Length(format!(
            "channel {} has {} epochs, expected {n}",
            c.label,
            c.smoothed.len()
        )));
    }
    let half = ma_length / 2;
    Ok(ContinuousHypnogram {
        start_time,
        step_s: epoch_len_s,
        ma_length,
        params: *params,
        channels,
        edge_flags: (0..n).map(|i| i < half || i + half >= n).collect(),
    })
}

pub fn build_hypnogram(
    record: &EdfRecord,
    channel_specs: &[ChannelSpec],
    params: &TurningParams,
    epoch_len_s: f64,
    ma_length: usize,
) -> Result<ContinuousHypnogram> {
    let signals = channel_specs
        .iter()
        .map(|spec| spec.resolve(record))
        .collect::<Result<Vec<_>>>()?;
    hypnogram_from_signals(record.header.start_time, &signals, params, epoch_len_s, ma_length)
}
