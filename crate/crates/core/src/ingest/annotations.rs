//! Canonical plain-text sleep-stage annotations.
//!
//! One epoch per line: `<onset> <label>`, separated by spaces or tabs.
//! `#` starts a comment. Onsets are seconds from record start unless the
//! directive line `#! onset = epoch` switches them to epoch indices.
//! Epochs skipped between two lines are filled with [`Stage::Unknown`].

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rechtschaffen–Kales stage vocabulary. Movement time and unscored epochs
/// share [`Stage::Unknown`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Stage {
    W,
    S1,
    S2,
    S3,
    S4,
    #[serde(rename = "REM")]
    Rem,
    #[serde(rename = "MT")]
    Unknown,
}

impl Stage {
    pub const ALL: [Stage; 7] = [
        Stage::W,
        Stage::S1,
        Stage::S2,
        Stage::S3,
        Stage::S4,
        Stage::Rem,
        Stage::Unknown,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::W => "W",
            Stage::S1 => "S1",
            Stage::S2 => "S2",
            Stage::S3 => "S3",
            Stage::S4 => "S4",
            Stage::Rem => "REM",
            Stage::Unknown => "MT",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Stage {
    type Err = ();

    fn from_str(token: &str) -> Result<Self, ()> {
        let t = token.trim().to_ascii_uppercase();
        let t = t.strip_prefix("SLEEP-").unwrap_or(&t);
        Ok(match t {
            "W" | "WAKE" | "S0" => Stage::W,
            "S1" | "N1" => Stage::S1,
            "S2" | "N2" => Stage::S2,
            "S3" => Stage::S3,
            "S4" => Stage::S4,
            "R" | "REM" => Stage::Rem,
            "MT" | "?" | "U" | "UNKNOWN" | "UNS" => Stage::Unknown,
            _ => return Err(()),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationSeries {
    pub epoch_len_s: f64,
    pub labels: Vec<Stage>,
    /// Onset of the first labelled epoch relative to record start.
    pub start_offset_s: f64,
}

impl AnnotationSeries {
    /// Renders the canonical text format with onsets in seconds.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (i, s) in self.labels.iter().enumerate() {
            let onset = self.start_offset_s + i as f64 * self.epoch_len_s;
            out.push_str(&format!("{onset}\t{s}\n"));
        }
        out
    }
}

#[derive(Clone, Copy, PartialEq)]
enum OnsetUnit {
    Seconds,
    Epoch,
}

pub fn parse_annotations(text: &str, epoch_len_s: f64) -> Result<AnnotationSeries> {
    if !(epoch_len_s.is_finite() && epoch_len_s > 0.0) {
        return Err(Error::param("epoch_len_s", format!("must be positive, got {epoch_len_s}")));
    }
    let mut unit = OnsetUnit::Seconds;
    let mut entries: Vec<(usize, f64, Stage)> = Vec::new();

    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if let Some(directive) = line.strip_prefix("#!") {
            let (key, value) = directive.split_once('=').ok_or_else(|| Error::Annotation {
                line: line_no,
                message: format!("malformed directive {line:?}"),
            })?;
            match (key.trim(), value.trim()) {
                ("onset", "epoch") => unit = OnsetUnit::Epoch,
                ("onset", "seconds") => unit = OnsetUnit::Seconds,
                _ => {
                    return Err(Error::Annotation {
                        line: line_no,
                        message: format!("unknown directive {line:?}"),
                    })
                }
            }
            continue;
        }
        let content = line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let mut fields = content.split_whitespace();
        let onset_text = fields.next().unwrap_or_default();
        let token = fields.next().ok_or_else(|| Error::Annotation {
            line: line_no,
            message: "missing stage label".into(),
        })?;
        let onset: f64 = onset_text.parse().map_err(|_| Error::Annotation {
            line: line_no,
            message: format!("cannot parse onset {onset_text:?}"),
        })?;
        if !onset.is_finite() || onset < 0.0 {
            return Err(Error::Annotation {
                line: line_no,
                message: format!("onset must be non-negative, got {onset}"),
            });
        }
        let stage = token.parse::<Stage>().map_err(|_| Error::UnknownStage {
            line: line_no,
            token: token.to_string(),
        })?;
        let seconds = match unit {
            OnsetUnit::Seconds => onset,
            OnsetUnit::Epoch => {
                if onset.fract() != 0.0 {
                    return Err(Error::Annotation {
                        line: line_no,
                        message: format!("epoch index {onset} is not an integer"),
                    });
                }
                onset * epoch_len_s
            }
        };
        entries.push((line_no, seconds, stage));
    }

    let Some(&(_, start, _)) = entries.first() else {
        return Ok(AnnotationSeries {
            epoch_len_s,
            labels: Vec::new(),
            start_offset_s: 0.0,
        });
    };

    let mut labels: Vec<Stage> = Vec::new();
    for &(line, seconds, stage) in &entries {
        // Small tolerance so onsets printed with rounding land on their epoch.
        let index = ((seconds - start) / epoch_len_s + 1e-6).floor() as usize;
        if !labels.is_empty() && index < labels.len() {
            return Err(Error::Annotation {
                line,
                message: format!("onset {seconds} s is not after the previous epoch"),
            });
        }
        labels.resize(index, Stage::Unknown);
        labels.push(stage);
    }
    Ok(AnnotationSeries {
        epoch_len_s,
        labels,
        start_offset_s: start,
    })
}
