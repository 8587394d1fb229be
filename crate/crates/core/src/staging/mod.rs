//! Threshold staging of 30 s epochs, block segmentation and agreement with
//! expert scoring. A demonstrator for reading the continuous hypnogram, not
//! a sleep scorer.

mod agreement;
mod segment;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hypnogram::ContinuousHypnogram;

pub use agreement::{
    agreement, compare_annotations, AgreementReport, ScoringClass, StageRateStats,
};
pub use segment::{segment_blocks, segment_channel, Block, BlockKind, SegmentParams};

pub const SCORING_EPOCH_S: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StageThresholds {
    /// Frontal rate above this is wake.
    pub wake_min: f64,
    /// Inclusive frontal band for REM, `[low, high]`.
    pub rem_band: (f64, f64),
    /// Frontal rate below this is slow-wave sleep.
    pub sws_max: f64,
}

impl Default for StageThresholds {
    fn default() -> Self {
        StageThresholds {
            wake_min: 0.36,
            rem_band: (0.31, 0.36),
            sws_max: 0.25,
        }
    }
}

impl StageThresholds {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.rem_band;
        let ordered = 0.0 < self.sws_max
            && self.sws_max < lo
            && lo < hi
            && hi <= self.wake_min
            && self.wake_min <= 1.0;
        if ordered {
            Ok(())
        } else {
            Err(Error::param(
                "thresholds",
                format!(
                    "need 0 < sws_max < rem_band.0 < rem_band.1 <= wake_min <= 1, got sws_max={}, rem_band=[{lo}, {hi}], wake_min={}",
                    self.sws_max, self.wake_min
                ),
            ))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeuristicStage {
    Wake,
    Rem,
    S2,
    Sws,
    Unknown,
}

impl HeuristicStage {
    pub fn as_str(self) -> &'static str {
        match self {
            HeuristicStage::Wake => "wake",
            HeuristicStage::Rem => "rem",
            HeuristicStage::S2 => "s2",
            HeuristicStage::Sws => "sws",
            HeuristicStage::Unknown => "unknown",
        }
    }
}

impl fmt::Display for HeuristicStage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for HeuristicStage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "wake" | "w" => Ok(HeuristicStage::Wake),
            "rem" | "r" => Ok(HeuristicStage::Rem),
            "s2" | "n2" => Ok(HeuristicStage::S2),
            "sws" | "n3" => Ok(HeuristicStage::Sws),
            "unknown" | "" => Ok(HeuristicStage::Unknown),
            other => Err(Error::UnknownStage {
                line: 0,
                token: other.to_string(),
            }),
        }
    }
}

/// Stage of one epoch from its mean frontal (`r_f`) and parietal (`r_p`)
/// rates. REM needs the frontal level at or above the parietal one; a REM
/// candidate without a parietal value is unknown.
pub fn classify_rates(r_f: Option<f64>, r_p: Option<f64>, th: &StageThresholds) -> HeuristicStage {
    let Some(f) = r_f else {
        return HeuristicStage::Unknown;
    };
    if f > th.wake_min {
        return HeuristicStage::Wake;
    }
    if (th.rem_band.0..=th.rem_band.1).contains(&f) {
        match r_p {
            None => return HeuristicStage::Unknown,
            Some(p) if f >= p => return HeuristicStage::Rem,
            Some(_) => {}
        }
    }
    if f < th.sws_max {
        HeuristicStage::Sws
    } else {
        HeuristicStage::S2
    }
}

/// Means over consecutive full epochs of `epoch_len_s`. An epoch with fewer
/// than half of its values present is missing; a trailing partial epoch is
/// dropped.
pub fn epoch_means(values: &[Option<f64>], step_s: f64, epoch_len_s: f64) -> Result<Vec<Option<f64>>> {
    let ratio = epoch_len_s / step_s;
    if !(ratio >= 1.0 && (ratio - ratio.round()).abs() < 1e-9) {
        return Err(Error::param(
            "epoch_len_s",
            format!("{epoch_len_s} s is not a whole number of {step_s} s steps"),
        ));
    }
    let k = ratio.round() as usize;
    Ok(values
        .chunks_exact(k)
        .map(|c| {
            let present: Vec<f64> = c.iter().flatten().copied().collect();
            (2 * present.len() >= k).then(|| present.iter().sum::<f64>() / present.len() as f64)
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StagedEpochs {
    pub epoch_len_s: f64,
    pub frontal_label: String,
    pub parietal_label: String,
    pub stages: Vec<HeuristicStage>,
    pub frontal: Vec<Option<f64>>,
    pub parietal: Vec<Option<f64>>,
}

impl StagedEpochs {
    pub fn len(&self) -> usize {
        self.stages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stages.is_empty()
    }

    /// CSV with columns `epoch,onset_s,stage,frontal_rate,parietal_rate`.
    pub fn to_csv(&self) -> String {
        let cell = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
        let mut out = String::from("epoch,onset_s,stage,frontal_rate,parietal_rate\n");
        for (i, s) in self.stages.iter().enumerate() {
            out.push_str(&format!(
                "{i},{},{s},{},{}\n",
                i as f64 * self.epoch_len_s,
                cell(self.frontal[i]),
                cell(self.parietal[i])
            ));
        }
        out
    }

    /// Reads the format written by [`StagedEpochs::to_csv`]; the rate columns
    /// are optional.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new().from_reader(text.as_bytes());
        let csv_err = |e: csv::Error| Error::Csv(e.to_string());
        let header = r.headers().map_err(csv_err)?.clone();
        if header.get(0) != Some("epoch") || header.get(1) != Some("onset_s") || header.get(2) != Some("stage") {
            return Err(Error::Csv("expected columns epoch,onset_s,stage".into()));
        }
        let mut onsets = Vec::new();
        let mut out = StagedEpochs {
            epoch_len_s: SCORING_EPOCH_S,
            frontal_label: header.get(3).unwrap_or("frontal_rate").into(),
            parietal_label: header.get(4).unwrap_or("parietal_rate").into(),
            stages: vec![],
            frontal: vec![],
            parietal: vec![],
        };
        let num = |s: Option<&str>, line: usize| -> Result<Option<f64>> {
            match s.map(str::trim) {
                None | Some("") => Ok(None),
                Some(v) => v
                    .parse()
                    .map(Some)
                    .map_err(|_| Error::Csv(format!("line {line}: bad number {v:?}"))),
            }
        };
        for (i, rec) in r.records().enumerate() {
            let rec = rec.map_err(csv_err)?;
            let line = i + 2;
            let onset = num(rec.get(1), line)?
                .ok_or_else(|| Error::Csv(format!("line {line}: missing onset")))?;
            onsets.push(onset);
            let stage = rec.get(2).unwrap_or_default().parse().map_err(|e| match e {
                Error::UnknownStage { token, .. } => Error::UnknownStage { line, token },
                e => e,
            })?;
            out.stages.push(stage);
            out.frontal.push(num(rec.get(3), line)?);
            out.parietal.push(num(rec.get(4), line)?);
        }
        if let [a, b, ..] = onsets[..] {
            out.epoch_len_s = b - a;
            if out.epoch_len_s <= 0.0 {
                return Err(Error::Csv("onsets must increase".into()));
            }
        }
        Ok(out)
    }
}

/// Stages the 30 s epochs of `h` from its designated frontal and parietal
/// channels.
pub fn classify_epochs(
    h: &ContinuousHypnogram,
    frontal: Option<&str>,
    parietal: Option<&str>,
    th: &StageThresholds,
) -> Result<StagedEpochs> {
    th.validate()?;
    let (Some(f_label), Some(p_label)) = (frontal, parietal) else {
        return Err(Error::Config(
            "staging needs both a frontal and a parietal channel".into(),
        ));
    };
    let f = epoch_means(h.values(f_label)?, h.step_s, SCORING_EPOCH_S)?;
    let p = epoch_means(h.values(p_label)?, h.step_s, SCORING_EPOCH_S)?;
    let stages = f.iter().zip(&p).map(|(f, p)| classify_rates(*f, *p, th)).collect();
    Ok(StagedEpochs {
        epoch_len_s: SCORING_EPOCH_S,
        frontal_label: f_label.to_string(),
        parietal_label: p_label.to_string(),
        stages,
        frontal: f,
        parietal: p,
    })
}
