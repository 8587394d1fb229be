//! Seeded synthetic signals with known turning statistics.
//!
//! iid noise from any continuous distribution turns with probability 2/3 at
//! every delay. A Gaussian AR(1) process `x_t = φ x_{t-1} + ε_t` turns at
//! delay 1 with probability `1/2 + asin((1-φ)/2)/π`, decreasing in φ.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::SignalSeries;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SynthKind {
    /// iid uniform on `(-amplitude, amplitude)`.
    WhiteNoise {
        #[serde(default = "one")]
        amplitude: f64,
    },
    /// `amplitude · sin(2π f t)`, `t` in seconds from the series start.
    Sine {
        frequency_hz: f64,
        #[serde(default = "one")]
        amplitude: f64,
    },
    /// Stationary Gaussian AR(1) with innovation standard deviation `sigma`.
    Ar1 {
        phi: f64,
        #[serde(default = "one")]
        sigma: f64,
    },
    /// Cycles through `blocks`, each lasting `block_s` seconds. Nested
    /// mixtures are not allowed.
    BlockMixture { block_s: f64, blocks: Vec<SynthKind> },
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    #[serde(rename = "signal")]
    pub kind: SynthKind,
    pub fs: f64,
    pub duration_s: f64,
    #[serde(default)]
    pub seed: u64,
}

impl SynthSpec {
    pub fn n_samples(&self) -> usize {
        (self.fs * self.duration_s).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fs.is_finite() && self.fs > 0.0) {
            return Err(Error::param("fs", format!("must be positive, got {}", self.fs)));
        }
        if !(self.duration_s.is_finite() && self.duration_s > 0.0) {
            return Err(Error::param(
                "duration_s",
                format!("must be positive, got {}", self.duration_s),
            ));
        }
        validate_kind(&self.kind, false)
    }
}

fn non_negative(name: &'static str, v: f64) -> Result<()> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(Error::param(name, format!("must be finite and non-negative, got {v}")))
    }
}

fn validate_kind(kind: &SynthKind, nested: bool) -> Result<()> {
    match kind {
        SynthKind::WhiteNoise { amplitude } => non_negative("amplitude", *amplitude),
        SynthKind::Sine {
            frequency_hz,
            amplitude,
        } => {
            non_negative("frequency_hz", *frequency_hz)?;
            non_negative("amplitude", *amplitude)
        }
        SynthKind::Ar1 { phi, sigma } => {
            if !(phi.is_finite() && phi.abs() < 1.0) {
                return Err(Error::param("phi", format!("|phi| must be below 1, got {phi}")));
            }
            non_negative("sigma", *sigma)
        }
        SynthKind::BlockMixture { block_s, blocks } => {
            if nested {
                return Err(Error::param("blocks", "block mixtures cannot be nested"));
            }
            if !(block_s.is_finite() && *block_s > 0.0) {
                return Err(Error::param("block_s", format!("must be positive, got {block_s}")));
            }
            if blocks.is_empty() {
                return Err(Error::param("blocks", "at least one block generator is required"));
            }
            blocks.iter().try_for_each(|b| validate_kind(b, true))
        }
    }
}

/// Per-generator state; AR(1) keeps its last value across blocks.
enum Source {
    Noise(f64),
    Sine { omega: f64, amplitude: f64 },
    Ar1 { phi: f64, sigma: f64, last: Option<f64> },
}

impl Source {
    fn new(kind: &SynthKind) -> Self {
        match *kind {
            SynthKind::WhiteNoise { amplitude } => Source::Noise(amplitude),
            SynthKind::Sine {
                frequency_hz,
                amplitude,
            } => Source::Sine {
                omega: 2.0 * std::f64::consts::PI * frequency_hz,
                amplitude,
            },
            SynthKind::Ar1 { phi, sigma } => Source::Ar1 { phi, sigma, last: None },
            SynthKind::BlockMixture { .. } => unreachable!("validated: no nested mixtures"),
        }
    }

    fn sample(&mut self, t_s: f64, rng: &mut ChaCha8Rng) -> f64 {
        match self {
            Source::Noise(a) => {
                if *a == 0.0 {
                    0.0
                } else {
                    rng.random_range(-*a..*a)
                }
            }
            Source::Sine { omega, amplitude } => *amplitude * (*omega * t_s).sin(),
            Source::Ar1 { phi, sigma, last } => {
                let eps: f64 = StandardNormal.sample(rng);
                let x = match *last {
                    // Start from the stationary distribution.
                    None => *sigma * eps / (1.0 - *phi * *phi).sqrt(),
                    Some(prev) => *phi * prev + *sigma * eps,
                };
                *last = Some(x);
                x
            }
        }
    }
}

pub fn generate(spec: &SynthSpec) -> Result<SignalSeries> {
    spec.validate()?;
    let n = spec.n_samples();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let samples: Vec<f64> = match &spec.kind {
        SynthKind::BlockMixture { block_s, blocks } => {
            let mut sources: Vec<Source> = blocks.iter().map(Source::new).collect();
            (0..n)
                .map(|i| {
                    let t = i as f64 / spec.fs;
                    let k = (t / block_s).floor() as usize % sources.len();
                    sources[k].sample(t, &mut rng)
                })
                .collect()
        }
        kind => {
            let mut src = Source::new(kind);
            (0..n).map(|i| src.sample(i as f64 / spec.fs, &mut rng)).collect()
        }
    };
    let label = match spec.kind {
        SynthKind::WhiteNoise { .. } => "white_noise",
        SynthKind::Sine { .. } => "sine",
        SynthKind::Ar1 { .. } => "ar1",
        SynthKind::BlockMixture { .. } => "block_mixture",
    };
    SignalSeries::new(label, spec.fs, samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::turning::turning_rate;

    fn spec(kind: SynthKind, fs: f64, duration_s: f64, seed: u64) -> SynthSpec {
        SynthSpec {
            kind,
            fs,
            duration_s,
            seed,
        }
    }

    #[test]
    fn seed_determinism() {
        let s = spec(SynthKind::Ar1 { phi: 0.5, sigma: 1.0 }, 100.0, 10.0, 9);
        assert_eq!(generate(&s).unwrap(), generate(&s).unwrap());
        let other = SynthSpec { seed: 10, ..s.clone() };
        assert_ne!(generate(&s).unwrap().samples, generate(&other).unwrap().samples);
    }

    #[test]
    fn nonstationary_ar1_rejected() {
        for phi in [1.0, -1.0, 1.5] {
            let s = spec(SynthKind::Ar1 { phi, sigma: 1.0 }, 100.0, 1.0, 0);
            assert!(matches!(generate(&s), Err(Error::Param { name: "phi", .. })));
        }
    }

    #[test]
    fn invalid_specs_rejected() {
        assert!(generate(&spec(SynthKind::WhiteNoise { amplitude: 1.0 }, 0.0, 1.0, 0)).is_err());
        assert!(generate(&spec(SynthKind::WhiteNoise { amplitude: 1.0 }, 10.0, -1.0, 0)).is_err());
        let nested = SynthKind::BlockMixture {
            block_s: 1.0,
            blocks: vec![SynthKind::BlockMixture { block_s: 1.0, blocks: vec![] }],
        };
        assert!(generate(&spec(nested, 10.0, 1.0, 0)).is_err());
    }

    #[test]
    fn white_noise_is_uniform_in_range() {
        let x = generate(&spec(SynthKind::WhiteNoise { amplitude: 1.0 }, 512.0, 100.0, 1)).unwrap();
        assert_eq!(x.len(), 51200);
        assert!(x.samples.iter().all(|v| (-1.0..1.0).contains(v)));
        let mean = x.samples.iter().sum::<f64>() / x.len() as f64;
        assert!(mean.abs() < 0.02);
    }

    #[test]
    fn sine_has_two_extrema_per_period() {
        let x = generate(&spec(
            SynthKind::Sine {
                frequency_hz: 2.0,
                amplitude: 1.0,
            },
            512.0,
            10.0,
            0,
        ))
        .unwrap();
        // Independent scan for strict extrema.
        let extrema = x
            .samples
            .windows(3)
            .filter(|w| (w[1] > w[0] && w[1] > w[2]) || (w[1] < w[0] && w[1] < w[2]))
            .count();
        assert_eq!(extrema, 40);
        let r = turning_rate(&x.samples, 1).unwrap();
        assert_eq!(r.turning_count, 40);
        assert!((r.rate.unwrap() - 40.0 / 5118.0).abs() < 1e-15);
    }

    #[test]
    fn block_mixture_alternates() {
        let kind = SynthKind::BlockMixture {
            block_s: 1.0,
            blocks: vec![
                SynthKind::Sine {
                    frequency_hz: 0.0,
                    amplitude: 1.0,
                },
                SynthKind::WhiteNoise { amplitude: 5.0 },
            ],
        };
        let x = generate(&spec(kind, 10.0, 4.0, 0)).unwrap();
        assert!(x.samples[..10].iter().all(|&v| v == 0.0));
        assert!(x.samples[10..20].iter().any(|&v| v != 0.0));
        assert!(x.samples[20..30].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn spec_deserializes() {
        let json = r#"{"signal":{"kind":"ar1","phi":0.9},"fs":512,"duration_s":10,"seed":3}"#;
        let s: SynthSpec = serde_json::from_str(json).unwrap();
        assert_eq!(s.kind, SynthKind::Ar1 { phi: 0.9, sigma: 1.0 });
        assert_eq!(s.n_samples(), 5120);
        let typo = r#"{"signal":{"kind":"ar1","phi":0.9,"sgima":1},"fs":512,"duration_s":10}"#;
        assert!(serde_json::from_str::<SynthSpec>(typo).is_err());
    }
}
