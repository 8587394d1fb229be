use serde::{Deserialize, Serialize};

/// Sampling rates below this are flagged in the quality report.
pub const MIN_SAMPLING_RATE_HZ: f64 = 128.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityReport {
    pub fs_ok: bool,
    /// Hardware band-pass `(low_hz, high_hz)` parsed from the prefilter text.
    pub prefilter_band: Option<(f64, f64)>,
    /// `|{t : x_t = x_{t+1}}| / (T - 1)`; zero for series shorter than 2.
    pub equal_neighbor_fraction: f64,
    /// `log2` of the number of distinct sample values.
    pub dynamic_range_bits: f64,
    /// Digital codes outside the declared digital range, clamped on read.
    pub clamped_samples: usize,
}

impl QualityReport {
    pub fn assess(samples: &[f64], fs: f64, prefilter: Option<&str>) -> Self {
        QualityReport {
            fs_ok: fs >= MIN_SAMPLING_RATE_HZ,
            prefilter_band: prefilter.and_then(parse_prefilter),
            equal_neighbor_fraction: equal_neighbor_fraction(samples),
            dynamic_range_bits: bits(distinct_values(samples)),
            clamped_samples: 0,
        }
    }

    pub(crate) fn with_distinct_count(mut self, distinct: usize) -> Self {
        self.dynamic_range_bits = bits(distinct);
        self
    }

    /// Human-readable warnings for gates that affect accuracy. None of them
    /// invalidates the record.
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !self.fs_ok {
            out.push(format!(
                "sampling rate below {MIN_SAMPLING_RATE_HZ} Hz; fine-scale structure is undersampled"
            ));
        }
        if self.equal_neighbor_fraction > 0.05 {
            out.push(format!(
                "{:.1}% of neighboring samples are equal; ties reduce the usable count",
                100.0 * self.equal_neighbor_fraction
            ));
        }
        if self.dynamic_range_bits > 0.0 && self.dynamic_range_bits < 10.0 {
            out.push(format!(
                "only {:.1} bits of effective resolution; coarse quantization or mains hum suspected",
                self.dynamic_range_bits
            ));
        }
        if self.clamped_samples > 0 {
            out.push(format!("{} samples clamped to the digital range", self.clamped_samples));
        }
        out
    }
}

fn bits(distinct: usize) -> f64 {
    if distinct == 0 {
        0.0
    } else {
        (distinct as f64).log2()
    }
}

fn equal_neighbor_fraction(samples: &[f64]) -> f64 {
    if samples.len() < 2 {
        return 0.0;
    }
    let equal = samples.windows(2).filter(|w| w[0] == w[1]).count();
    equal as f64 / (samples.len() - 1) as f64
}

fn distinct_values(samples: &[f64]) -> usize {
    // +0.0 and -0.0 compare equal, so normalize before comparing bit patterns.
    let mut keys: Vec<u64> = samples.iter().map(|&v| (v + 0.0).to_bits()).collect();
    keys.sort_unstable();
    keys.dedup();
    keys.len()
}

/// Extracts `(high-pass, low-pass)` corner frequencies from prefilter text
/// such as `"HP:0.5Hz LP:30Hz N:50Hz"`.
pub fn parse_prefilter(text: &str) -> Option<(f64, f64)> {
    let upper = text.to_ascii_uppercase();
    let low = corner(&upper, "HP")?;
    let high = corner(&upper, "LP")?;
    Some((low, high))
}

fn corner(text: &str, key: &str) -> Option<f64> {
    let start = text.find(&format!("{key}:"))? + key.len() + 1;
    let rest = text[start..].trim_start();
    let end = rest
        .find(|c: char| !(c.is_ascii_digit() || c == '.' || c == '-' || c == '+'))
        .unwrap_or(rest.len());
    rest[..end].parse().ok()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equal_neighbors_on_ramp_and_constant() {
        let ramp: Vec<f64> = (0..100).map(f64::from).collect();
        assert_eq!(QualityReport::assess(&ramp, 512.0, None).equal_neighbor_fraction, 0.0);
        let flat = vec![3.0; 100];
        assert_eq!(QualityReport::assess(&flat, 512.0, None).equal_neighbor_fraction, 1.0);
    }

    #[test]
    fn equal_neighbor_fraction_is_exact() {
        let x = [1.0, 1.0, 2.0, 2.0, 2.0, 3.0];
        // pairs equal: (0,1), (2,3), (3,4) -> 3 / 5
        assert_eq!(equal_neighbor_fraction(&x), 3.0 / 5.0);
    }

    #[test]
    fn bit_depth_counts_distinct_values() {
        let x: Vec<f64> = (0..4096).map(|i| f64::from(i % 1024)).collect();
        assert_eq!(QualityReport::assess(&x, 512.0, None).dynamic_range_bits, 10.0);
        assert_eq!(distinct_values(&[0.0, -0.0]), 1);
    }

    #[test]
    fn prefilter_text() {
        assert_eq!(parse_prefilter("HP:0.5Hz LP:30Hz"), Some((0.5, 30.0)));
        assert_eq!(parse_prefilter("HP: 0.1 Hz LP: 70.0 Hz N:50Hz"), Some((0.1, 70.0)));
        assert_eq!(parse_prefilter("LP:30Hz"), None);
        assert_eq!(parse_prefilter(""), None);
    }

    #[test]
    fn low_rate_is_flagged() {
        let q = QualityReport::assess(&[0.0, 1.0], 100.0, None);
        assert!(!q.fs_ok);
        assert!(!q.warnings().is_empty());
    }
}
