use std::fmt::Write;

use serde::{Deserialize, Serialize};

use super::{HeuristicStage, StagedEpochs};
use crate::error::{Error, Result};
use crate::ingest::{AnnotationSeries, Stage};

/// Common vocabulary for the confusion matrix. Expert S3 and S4 both map to
/// `Sws`; heuristic staging never produces `S1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoringClass {
    Wake,
    S1,
    S2,
    Sws,
    Rem,
}

impl ScoringClass {
    pub const ALL: [ScoringClass; 5] = [
        ScoringClass::Wake,
        ScoringClass::S1,
        ScoringClass::S2,
        ScoringClass::Sws,
        ScoringClass::Rem,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ScoringClass::Wake => "wake",
            ScoringClass::S1 => "s1",
            ScoringClass::S2 => "s2",
            ScoringClass::Sws => "sws",
            ScoringClass::Rem => "rem",
        }
    }

    fn index(self) -> usize {
        self as usize
    }

    pub fn from_stage(s: Stage) -> Option<Self> {
        match s {
            Stage::W => Some(ScoringClass::Wake),
            Stage::S1 => Some(ScoringClass::S1),
            Stage::S2 => Some(ScoringClass::S2),
            Stage::S3 | Stage::S4 => Some(ScoringClass::Sws),
            Stage::Rem => Some(ScoringClass::Rem),
            Stage::Unknown => None,
        }
    }

    pub fn from_heuristic(s: HeuristicStage) -> Option<Self> {
        match s {
            HeuristicStage::Wake => Some(ScoringClass::Wake),
            HeuristicStage::Rem => Some(ScoringClass::Rem),
            HeuristicStage::S2 => Some(ScoringClass::S2),
            HeuristicStage::Sws => Some(ScoringClass::Sws),
            HeuristicStage::Unknown => None,
        }
    }
}

/// Frontal rate summary over the epochs of one expert stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRateStats {
    pub stage: Stage,
    pub epochs: usize,
    pub mean: Option<f64>,
    pub min: Option<f64>,
    pub max: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    /// Row and column order of the matrix.
    pub classes: Vec<ScoringClass>,
    /// `confusion_matrix[expert][heuristic]` epoch counts.
    pub confusion_matrix: Vec<Vec<u64>>,
    /// Epochs where both sides have a scoring class.
    pub scored_epochs: u64,
    /// Epochs left out because either side is unknown.
    pub excluded_epochs: u64,
    pub epoch_accuracy: f64,
    pub cohen_kappa: f64,
    pub rate_stats: Vec<StageRateStats>,
}

impl AgreementReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "expert \\ heuristic {}", row(self.classes.iter().map(|c| c.as_str())));
        for (c, counts) in self.classes.iter().zip(&self.confusion_matrix) {
            let _ = writeln!(
                out,
                "{:<18} {}",
                c.as_str(),
                row(counts.iter().map(|n| n.to_string()))
            );
        }
        let _ = writeln!(out);
        let _ = writeln!(out, "scored epochs   {}", self.scored_epochs);
        let _ = writeln!(out, "excluded epochs {}", self.excluded_epochs);
        let _ = writeln!(out, "accuracy        {:.4}", self.epoch_accuracy);
        let _ = writeln!(out, "cohen kappa     {:.4}", self.cohen_kappa);
        let _ = writeln!(out);
        let _ = writeln!(out, "stage  epochs    mean     min     max");
        let fmt = |v: Option<f64>| v.map(|v| format!("{v:.4}")).unwrap_or_else(|| "-".into());
        for s in &self.rate_stats {
            let _ = writeln!(
                out,
                "{:<6} {:>6} {:>7} {:>7} {:>7}",
                s.stage.as_str(),
                s.epochs,
                fmt(s.mean),
                fmt(s.min),
                fmt(s.max)
            );
        }
        out
    }
}

fn row<S: AsRef<str>>(cells: impl Iterator<Item = S>) -> String {
    cells.map(|c| format!("{:>7}", c.as_ref())).collect::<Vec<_>>().join("")
}

/// Agreement between aligned label sequences. `rates` carries the frontal
/// rate per epoch for the per-stage summary.
pub fn agreement(
    heuristic: &[Option<ScoringClass>],
    expert: &[Stage],
    rates: Option<&[Option<f64>]>,
) -> Result<AgreementReport> {
    if heuristic.len() != expert.len() || rates.is_some_and(|r| r.len() != expert.len()) {
        return Err(Error::Length(format!(
            "aligned sequences differ in length: {} heuristic, {} expert epochs",
            heuristic.len(),
            expert.len()
        )));
    }
    let k = ScoringClass::ALL.len();
    let mut m = vec![vec![0u64; k]; k];
    let mut excluded = 0u64;
    for (h, e) in heuristic.iter().zip(expert) {
        match (ScoringClass::from_stage(*e), h) {
            (Some(e), Some(h)) => m[e.index()][h.index()] += 1,
            _ => excluded += 1,
        }
    }
    let n: u64 = m.iter().flatten().sum();
    if n == 0 {
        return Err(Error::Length("no epoch is scored on both sides".into()));
    }
    let nf = n as f64;
    let po = (0..k).map(|i| m[i][i]).sum::<u64>() as f64 / nf;
    let pe = (0..k)
        .map(|i| {
            let row: u64 = m[i].iter().sum();
            let col: u64 = m.iter().map(|r| r[i]).sum();
            row as f64 * col as f64
        })
        .sum::<f64>()
        / (nf * nf);
    let kappa = if pe >= 1.0 { 1.0 } else { (po - pe) / (1.0 - pe) };

    let rate_stats = Stage::ALL
        .iter()
        .filter_map(|&stage| {
            let epochs = expert.iter().filter(|e| **e == stage).count();
            if epochs == 0 {
                return None;
            }
            let values: Vec<f64> = match rates {
                Some(r) => expert
                    .iter()
                    .zip(r)
                    .filter(|(e, _)| **e == stage)
                    .filter_map(|(_, v)| *v)
                    .collect(),
                None => Vec::new(),
            };
            let mean = (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64);
            Some(StageRateStats {
                stage,
                epochs,
                mean,
                min: values.iter().copied().reduce(f64::min),
                max: values.iter().copied().reduce(f64::max),
            })
        })
        .collect();

    Ok(AgreementReport {
        classes: ScoringClass::ALL.to_vec(),
        confusion_matrix: m,
        scored_epochs: n,
        excluded_epochs: excluded,
        epoch_accuracy: po,
        cohen_kappa: kappa.clamp(-1.0, 1.0),
        rate_stats,
    })
}

/// Aligns expert epochs onto the heuristic grid, which starts at the
/// recording start, and scores agreement. Heuristic epochs beyond the expert
/// annotation are ignored.
pub fn compare_annotations(stages: &StagedEpochs, expert: &AnnotationSeries) -> Result<AgreementReport> {
    if (stages.epoch_len_s - expert.epoch_len_s).abs() > 1e-9 {
        return Err(Error::Length(format!(
            "epoch lengths differ: {} s heuristic, {} s expert",
            stages.epoch_len_s, expert.epoch_len_s
        )));
    }
    let shift = expert.start_offset_s / expert.epoch_len_s;
    if shift < -1e-6 || (shift - shift.round()).abs() > 1e-6 {
        return Err(Error::Length(format!(
            "expert onset {} s is not on the {} s epoch grid",
            expert.start_offset_s, expert.epoch_len_s
        )));
    }
    let first = shift.round() as usize;
    let last = first + expert.labels.len();
    if last > stages.len() {
        return Err(Error::Length(format!(
            "expert annotation covers epochs {first}..{last}, heuristic staging only {}",
            stages.len()
        )));
    }
    let classes: Vec<Option<ScoringClass>> = stages.stages[first..last]
        .iter()
        .map(|s| ScoringClass::from_heuristic(*s))
        .collect();
    agreement(&classes, &expert.labels, Some(&stages.frontal[first..last]))
}
