//! Turning-point classification and turning rates.
//!
//! A sample `x[t]` is a turning point with respect to delay `d` when it is a
//! strict maximum or minimum of the triple `(x[t-d], x[t], x[t+d])`. The
//! turning rate of a window is the number of turning points divided by the
//! number of comparable, non-tied samples. Indices here are 0-based, so the
//! comparable range of a series of length `T` is `d..T-d`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::SignalSeries;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TiePolicy {
    /// Drop tied samples from numerator and denominator.
    #[default]
    Exclude,
    /// Add seeded uniform noise before counting; any remaining ties are
    /// still excluded.
    Dither,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TurningParams {
    pub delay: usize,
    pub tie_policy: TiePolicy,
    /// Half-width of the dither noise, in physical units.
    pub dither_amplitude: f64,
    pub seed: u64,
}

impl Default for TurningParams {
    fn default() -> Self {
        TurningParams {
            delay: 4,
            tie_policy: TiePolicy::Exclude,
            dither_amplitude: 1e-3,
            seed: 0,
        }
    }
}

impl TurningParams {
    pub fn with_delay(delay: usize) -> Self {
        TurningParams {
            delay,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.delay == 0 {
            return Err(Error::param("d", "delay must be at least 1"));
        }
        if !(self.dither_amplitude.is_finite() && self.dither_amplitude >= 0.0) {
            return Err(Error::param(
                "dither_amplitude",
                format!("must be non-negative, got {}", self.dither_amplitude),
            ));
        }
        if self.delay > 10 {
            log::warn!("delay {} exceeds 10; rates pick up alpha/sigma rhythm", self.delay);
        }
        Ok(())
    }

    /// Smallest window that has at least one comparable sample.
    pub fn min_window(&self) -> usize {
        2 * self.delay + 1
    }
}

/// Delay emulating 128 Hz sampling: `round(fs / 128)` clamped to `1..=10`.
pub fn default_delay(fs: f64) -> usize {
    ((fs / 128.0).round() as i64).clamp(1, 10) as usize
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TurnKind {
    Max,
    Min,
    None,
    Tie,
}

impl TurnKind {
    pub fn is_turning(self) -> bool {
        matches!(self, TurnKind::Max | TurnKind::Min)
    }
}

#[inline(always)]
fn kind(prev: f64, cur: f64, next: f64) -> TurnKind {
    if cur == prev || cur == next {
        TurnKind::Tie
    } else if prev < cur && cur > next {
        TurnKind::Max
    } else if prev > cur && cur < next {
        TurnKind::Min
    } else {
        TurnKind::None
    }
}

/// Classifies sample `t` (0-based) against its neighbors at distance `d`.
pub fn classify_point(x: &[f64], t: usize, d: usize) -> Result<TurnKind> {
    if d == 0 {
        return Err(Error::param("d", "delay must be at least 1"));
    }
    if t < d || t + d >= x.len() {
        return Err(Error::Index {
            index: t,
            lo: d,
            hi: x.len().saturating_sub(d + 1),
        });
    }
    Ok(kind(x[t - d], x[t], x[t + d]))
}

/// Turning and valid (non-tie) counts over the centers `x[lo..hi]`.
/// Callers guarantee `lo >= d` and `hi + d <= x.len()`.
#[inline]
fn count_range(x: &[f64], lo: usize, hi: usize, d: usize) -> (u32, u32) {
    if hi <= lo {
        return (0, 0);
    }
    let left = &x[lo - d..hi - d];
    let mid = &x[lo..hi];
    let right = &x[lo + d..hi + d];
    let mut turns = 0u32;
    let mut ties = 0u32;
    for ((&a, &b), &c) in left.iter().zip(mid).zip(right) {
        ties += u32::from((b == a) | (b == c));
        turns += u32::from(((b > a) & (b > c)) | ((b < a) & (b < c)));
    }
    (turns, (hi - lo) as u32 - ties)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowRate {
    pub rate: Option<f64>,
    pub turning_count: usize,
    pub valid_count: usize,
}

impl WindowRate {
    fn from_counts(turning: usize, valid: usize) -> Self {
        WindowRate {
            rate: (valid > 0).then(|| turning as f64 / valid as f64),
            turning_count: turning,
            valid_count: valid,
        }
    }
}

/// Turning rate of a plain slice; only samples whose neighbors lie inside
/// the slice are comparable. Ties are always excluded.
pub fn turning_rate(x: &[f64], d: usize) -> Result<WindowRate> {
    if d == 0 {
        return Err(Error::param("d", "delay must be at least 1"));
    }
    if x.len() < 2 * d + 1 {
        return Err(Error::Window(format!(
            "window of {} samples is shorter than 2d+1 = {}",
            x.len(),
            2 * d + 1
        )));
    }
    // Chunked so the u32 counters cannot overflow on very long inputs.
    let (mut turning, mut valid) = (0usize, 0usize);
    let hi = x.len() - d;
    let mut lo = d;
    while lo < hi {
        let end = (lo + (1 << 30)).min(hi);
        let (t, v) = count_range(x, lo, end, d);
        turning += t as usize;
        valid += v as usize;
        lo = end;
    }
    Ok(WindowRate::from_counts(turning, valid))
}

/// Turning rate of the samples `from..to` of `x`, treating the window as a
/// standalone series.
pub fn turning_rate_window(
    x: &SignalSeries,
    from: usize,
    to: usize,
    p: &TurningParams,
) -> Result<WindowRate> {
    p.validate()?;
    if from > to || to > x.len() {
        return Err(Error::Window(format!(
            "window {from}..{to} outside series of {} samples",
            x.len()
        )));
    }
    let window = &x.samples[from..to];
    match p.tie_policy {
        TiePolicy::Exclude => turning_rate(window, p.delay),
        TiePolicy::Dither => {
            if window.len() < p.min_window() {
                return turning_rate(window, p.delay);
            }
            let noisy = dither(window, p.dither_amplitude, p.seed);
            turning_rate(&noisy, p.delay)
        }
    }
}

/// Per-epoch turning rates of one channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochSeries {
    pub epoch_len_s: f64,
    pub rates: Vec<Option<f64>>,
    pub turning_counts: Vec<u32>,
    /// Per-epoch `T'`: comparable samples not excluded as ties.
    pub valid_counts: Vec<u32>,
    pub channel_label: String,
    pub params: TurningParams,
}

impl EpochSeries {
    pub fn len(&self) -> usize {
        self.rates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rates.is_empty()
    }
}

/// Samples per epoch; `fs * epoch_len_s` must be a whole number.
pub fn epoch_samples(fs: f64, epoch_len_s: f64) -> Result<usize> {
    if !(epoch_len_s.is_finite() && epoch_len_s > 0.0) {
        return Err(Error::param("epoch_len_s", format!("must be positive, got {epoch_len_s}")));
    }
    let exact = fs * epoch_len_s;
    let n = exact.round();
    if n < 1.0 || (exact - n).abs() > 1e-6 {
        return Err(Error::param(
            "epoch_len_s",
            format!("{epoch_len_s} s at {fs} Hz is not a whole number of samples"),
        ));
    }
    Ok(n as usize)
}

/// Classifies every comparable sample of the whole series once and bins it
/// into the epoch containing it. Neighbors may lie in adjacent epochs; the
/// first and last `d` samples of the series are not comparable. A trailing
/// partial epoch is kept.
pub fn epoch_counts(x: &[f64], epoch_len: usize, d: usize) -> (Vec<u32>, Vec<u32>) {
    assert!(epoch_len > 0 && d > 0);
    let n_epochs = x.len().div_ceil(epoch_len);
    let mut turning = Vec::with_capacity(n_epochs);
    let mut valid = Vec::with_capacity(n_epochs);
    let last = x.len().saturating_sub(d);
    for e in 0..n_epochs {
        let start = e * epoch_len;
        let end = (start + epoch_len).min(x.len());
        let lo = start.max(d);
        let hi = end.min(last);
        let (t, v) = count_range(x, lo, hi.max(lo), d);
        turning.push(t);
        valid.push(v);
    }
    (turning, valid)
}

pub fn epoch_rates(x: &SignalSeries, epoch_len_s: f64, p: &TurningParams) -> Result<EpochSeries> {
    p.validate()?;
    if x.is_empty() {
        return Err(Error::EmptySignal(x.label.clone()));
    }
    let n = epoch_samples(x.fs, epoch_len_s)?;
    if n < p.min_window() {
        return Err(Error::Window(format!(
            "epoch of {n} samples is shorter than 2d+1 = {}",
            p.min_window()
        )));
    }
    let (turning_counts, valid_counts) = match p.tie_policy {
        TiePolicy::Exclude => epoch_counts(&x.samples, n, p.delay),
        TiePolicy::Dither => {
            let noisy = dither(&x.samples, p.dither_amplitude, p.seed);
            epoch_counts(&noisy, n, p.delay)
        }
    };
    let rates = turning_counts
        .iter()
        .zip(&valid_counts)
        .map(|(&t, &v)| (v > 0).then(|| f64::from(t) / f64::from(v)))
        .collect();
    Ok(EpochSeries {
        epoch_len_s,
        rates,
        turning_counts,
        valid_counts,
        channel_label: x.label.clone(),
        params: *p,
    })
}

fn dither(x: &[f64], amplitude: f64, seed: u64) -> Vec<f64> {
    if amplitude == 0.0 {
        return x.to_vec();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    x.iter()
        .map(|&v| v + rng.random_range(-amplitude..amplitude))
        .collect()
}

/// Adds iid uniform noise on `(-amplitude, amplitude)` to every sample,
/// deterministically for a given seed. Amplitude zero returns the input.
pub fn dither_series(x: &SignalSeries, amplitude: f64, seed: u64) -> Result<SignalSeries> {
    if !(amplitude.is_finite() && amplitude >= 0.0) {
        return Err(Error::param(
            "dither_amplitude",
            format!("must be non-negative, got {amplitude}"),
        ));
    }
    if amplitude == 0.0 {
        return Ok(x.clone());
    }
    x.map_samples(dither(&x.samples, amplitude, seed))
}
