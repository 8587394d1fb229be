//! Record ingestion: EDF parsing, bipolar montages, expert annotations and
//! data-quality checks.

mod annotations;
mod edf;
mod quality;

pub use annotations::{parse_annotations, AnnotationSeries, Stage};
pub use edf::{parse_edf, read_edf, EdfRecord, RecordHeader, SignalHeader};
pub use quality::{parse_prefilter, QualityReport, MIN_SAMPLING_RATE_HZ};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignalSource {
    RawChannel,
    BipolarDerived,
}

/// One channel of physical-unit samples at a fixed sampling rate.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalSeries {
    pub label: String,
    pub fs: f64,
    pub samples: Vec<f64>,
    pub source: SignalSource,
    pub quality: QualityReport,
}

impl SignalSeries {
    /// Builds a raw channel and computes its quality report. Samples must be
    /// finite and `fs` positive.
    pub fn new(label: impl Into<String>, fs: f64, samples: Vec<f64>) -> Result<Self> {
        Self::with_source(label, fs, samples, SignalSource::RawChannel, None)
    }

    pub(crate) fn with_source(
        label: impl Into<String>,
        fs: f64,
        samples: Vec<f64>,
        source: SignalSource,
        prefilter: Option<&str>,
    ) -> Result<Self> {
        if !(fs.is_finite() && fs > 0.0) {
            return Err(Error::param("fs", format!("sampling rate must be positive, got {fs}")));
        }
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::param("samples", format!("non-finite value at index {i}")));
        }
        let quality = QualityReport::assess(&samples, fs, prefilter);
        Ok(SignalSeries {
            label: label.into(),
            fs,
            samples,
            source,
            quality,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.fs
    }

    /// Copy of this series with new sample values and the quality report
    /// recomputed. Label, rate, source and prefilter band are kept.
    pub fn map_samples(&self, samples: Vec<f64>) -> Result<Self> {
        let mut out = Self::with_source(self.label.clone(), self.fs, samples, self.source, None)?;
        out.quality.prefilter_band = self.quality.prefilter_band;
        Ok(out)
    }
}

/// Pointwise difference `a - b`, labelled `"<a>-<b>"`.
pub fn derive_bipolar(a: &SignalSeries, b: &SignalSeries) -> Result<SignalSeries> {
    if a.fs != b.fs {
        return Err(Error::Montage(format!(
            "sampling rates differ: {} has {} Hz, {} has {} Hz",
            a.label, a.fs, b.label, b.fs
        )));
    }
    if a.len() != b.len() {
        return Err(Error::Montage(format!(
            "lengths differ: {} has {} samples, {} has {}",
            a.label,
            a.len(),
            b.label,
            b.len()
        )));
    }
    let samples = a.samples.iter().zip(&b.samples).map(|(x, y)| x - y).collect();
    let mut out = SignalSeries::with_source(
        format!("{}-{}", a.label, b.label),
        a.fs,
        samples,
        SignalSource::BipolarDerived,
        None,
    )?;
    if a.quality.prefilter_band == b.quality.prefilter_band {
        out.quality.prefilter_band = a.quality.prefilter_band;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bipolar_subtracts_pointwise() {
        let a = SignalSeries::new("A", 512.0, vec![5.0, 5.0]).unwrap();
        let b = SignalSeries::new("B", 512.0, vec![2.0, 3.0]).unwrap();
        let d = derive_bipolar(&a, &b).unwrap();
        assert_eq!(d.samples, vec![3.0, 2.0]);
        assert_eq!(d.label, "A-B");
        assert_eq!(d.source, SignalSource::BipolarDerived);
    }

    #[test]
    fn bipolar_self_cancels() {
        let a = SignalSeries::new("A", 256.0, vec![1.5, -2.0, 7.25, 0.0]).unwrap();
        let d = derive_bipolar(&a, &a).unwrap();
        assert!(d.samples.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn bipolar_rejects_rate_mismatch() {
        let a = SignalSeries::new("A", 512.0, vec![0.0; 4]).unwrap();
        let b = SignalSeries::new("B", 256.0, vec![0.0; 4]).unwrap();
        assert!(matches!(derive_bipolar(&a, &b), Err(Error::Montage(_))));
        let c = SignalSeries::new("C", 512.0, vec![0.0; 5]).unwrap();
        assert!(matches!(derive_bipolar(&a, &c), Err(Error::Montage(_))));
    }

    #[test]
    fn rejects_non_finite_samples() {
        assert!(SignalSeries::new("x", 1.0, vec![0.0, f64::NAN]).is_err());
        assert!(SignalSeries::new("x", 0.0, vec![0.0]).is_err());
    }
}
