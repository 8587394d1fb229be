//! Infra-slow oscillations of the smoothed turning rate (τ waves, 30 s to
//! 2 min wavelength) and windowed cross-channel synchrony.
//!
//! Detection works on the smoothed 1 s series:
//!
//! 1. fill short gaps by linear interpolation;
//! 2. subtract a centered moving median spanning four maximal wavelengths;
//! 3. pick alternating extrema with a hysteresis threshold, so a reversal is
//!    only accepted after the series has moved back by `hysteresis`;
//! 4. a half-cycle (extremum to extremum) qualifies when its swing is at
//!    least `min_amplitude` and twice its duration lies in the wavelength
//!    band; runs of two or more qualifying half-cycles form one event.
//!
//! The extrema in step 3 do not depend on `min_amplitude`, so raising it can
//! only remove or shorten events.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hypnogram::ContinuousHypnogram;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TauParams {
    pub min_wavelength_s: f64,
    pub max_wavelength_s: f64,
    /// Minimum peak-to-trough swing of a half-cycle, in rate units.
    pub min_amplitude: f64,
    /// Reversal threshold for extremum picking, in rate units.
    pub hysteresis: f64,
    /// Largest tolerated fraction of missing values.
    pub max_missing_fraction: f64,
}

impl Default for TauParams {
    fn default() -> Self {
        TauParams {
            min_wavelength_s: 30.0,
            max_wavelength_s: 120.0,
            min_amplitude: 0.02,
            hysteresis: 0.01,
            max_missing_fraction: 0.1,
        }
    }
}

impl TauParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.min_wavelength_s > 0.0 && self.min_wavelength_s < self.max_wavelength_s) {
            return Err(Error::param(
                "tau.min_wavelength_s",
                format!(
                    "need 0 < min < max, got [{}, {}]",
                    self.min_wavelength_s, self.max_wavelength_s
                ),
            ));
        }
        if !self.max_wavelength_s.is_finite() {
            return Err(Error::param("tau.max_wavelength_s", "must be finite"));
        }
        if !(self.min_amplitude.is_finite() && self.min_amplitude >= 0.0) {
            return Err(Error::param("tau.min_amplitude", "must be non-negative"));
        }
        if !(self.hysteresis.is_finite() && self.hysteresis > 0.0) {
            return Err(Error::param("tau.hysteresis", "must be positive"));
        }
        if !(0.0..=1.0).contains(&self.max_missing_fraction) {
            return Err(Error::param("tau.max_missing_fraction", "must lie in [0, 1]"));
        }
        Ok(())
    }

    /// Odd moving-median length, in samples, for a series step of `step_s`.
    pub fn detrend_window(&self, step_s: f64) -> usize {
        let n = (4.0 * self.max_wavelength_s / step_s).round().max(1.0) as usize;
        n | 1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TauEvent {
    pub start_s: f64,
    pub end_s: f64,
    pub n_cycles: usize,
    pub mean_wavelength_s: f64,
    pub peak_to_trough: f64,
    pub channel: String,
}

/// Centered moving median of odd length `window`, shrinking at the edges.
pub fn moving_median(x: &[f64], window: usize) -> Vec<f64> {
    let half = window / 2;
    let n = x.len();
    let mut sorted: Vec<f64> = Vec::with_capacity(window + 1);
    let (mut lo, mut hi) = (0usize, 0usize);
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let new_lo = i.saturating_sub(half);
        let new_hi = (i + half + 1).min(n);
        for &v in &x[hi..new_hi] {
            let at = sorted.partition_point(|s| s.total_cmp(&v).is_lt());
            sorted.insert(at, v);
        }
        for &v in &x[lo..new_lo] {
            let at = sorted.partition_point(|s| s.total_cmp(&v).is_lt());
            sorted.remove(at);
        }
        lo = new_lo;
        hi = new_hi;
        let m = sorted.len();
        out.push(if m % 2 == 1 {
            sorted[m / 2]
        } else {
            0.5 * (sorted[m / 2 - 1] + sorted[m / 2])
        });
    }
    out
}

/// Linear interpolation over missing values; ends are held at the nearest
/// present value. `None` when nothing is present.
pub fn fill_missing(values: &[Option<f64>]) -> Option<Vec<f64>> {
    let present: Vec<usize> = values
        .iter()
        .enumerate()
        .filter_map(|(i, v)| v.map(|_| i))
        .collect();
    let (&first, &last) = (present.first()?, present.last()?);
    let mut out = Vec::with_capacity(values.len());
    let mut next = 0usize;
    for (i, v) in values.iter().enumerate() {
        if let Some(v) = v {
            out.push(*v);
            next += 1;
            continue;
        }
        let value = if i < first {
            values[first].unwrap()
        } else if i > last {
            values[last].unwrap()
        } else {
            let (a, b) = (present[next - 1], present[next]);
            let (va, vb) = (values[a].unwrap(), values[b].unwrap());
            va + (vb - va) * (i - a) as f64 / (b - a) as f64
        };
        out.push(value);
    }
    Some(out)
}

/// Gap-filled series minus its centered moving median.
pub fn detrend(values: &[Option<f64>], window: usize) -> Option<Vec<f64>> {
    let filled = fill_missing(values)?;
    let trend = moving_median(&filled, window);
    Some(filled.iter().zip(&trend).map(|(v, t)| v - t).collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Extremum {
    pub index: usize,
    pub value: f64,
    pub is_peak: bool,
}

/// Alternating extrema; a candidate is confirmed once the series retreats
/// from it by at least `hysteresis`.
pub fn hysteresis_extrema(x: &[f64], hysteresis: f64) -> Vec<Extremum> {
    #[derive(PartialEq)]
    enum Dir {
        Unknown,
        Rising,
        Falling,
    }
    let mut out = Vec::new();
    if x.is_empty() {
        return out;
    }
    let (mut hi, mut lo) = (0usize, 0usize);
    let mut dir = Dir::Unknown;
    for i in 1..x.len() {
        let v = x[i];
        match dir {
            Dir::Unknown => {
                if v > x[hi] {
                    hi = i;
                }
                if v < x[lo] {
                    lo = i;
                }
                if v - x[lo] >= hysteresis && lo < i {
                    out.push(Extremum { index: lo, value: x[lo], is_peak: false });
                    dir = Dir::Rising;
                    hi = i;
                } else if x[hi] - v >= hysteresis && hi < i {
                    out.push(Extremum { index: hi, value: x[hi], is_peak: true });
                    dir = Dir::Falling;
                    lo = i;
                }
            }
            Dir::Rising => {
                if v > x[hi] {
                    hi = i;
                } else if x[hi] - v >= hysteresis {
                    out.push(Extremum { index: hi, value: x[hi], is_peak: true });
                    dir = Dir::Falling;
                    lo = i;
                }
            }
            Dir::Falling => {
                if v < x[lo] {
                    lo = i;
                } else if v - x[lo] >= hysteresis {
                    out.push(Extremum { index: lo, value: x[lo], is_peak: false });
                    dir = Dir::Rising;
                    hi = i;
                }
            }
        }
    }
    out
}

/// τ events of one smoothed rate series sampled every `step_s` seconds,
/// whose first value sits at `offset_s`.
pub fn detect_tau(
    values: &[Option<f64>],
    step_s: f64,
    offset_s: f64,
    channel: &str,
    p: &TauParams,
) -> Result<Vec<TauEvent>> {
    p.validate()?;
    if !(step_s.is_finite() && step_s > 0.0) {
        return Err(Error::param("step_s", format!("must be positive, got {step_s}")));
    }
    let span = values.len() as f64 * step_s;
    if span < p.max_wavelength_s {
        return Err(Error::Detection(format!(
            "{channel}: {span} s of data is shorter than the maximal wavelength {} s",
            p.max_wavelength_s
        )));
    }
    let missing = values.iter().filter(|v| v.is_none()).count();
    if missing as f64 > p.max_missing_fraction * values.len() as f64 {
        return Err(Error::Detection(format!(
            "{channel}: {missing} of {} values missing",
            values.len()
        )));
    }
    let detrended = detrend(values, p.detrend_window(step_s))
        .ok_or_else(|| Error::Detection(format!("{channel}: no values present")))?;
    let extrema = hysteresis_extrema(&detrended, p.hysteresis);

    let qualifies = |a: &Extremum, b: &Extremum| {
        let wavelength = 2.0 * (b.index - a.index) as f64 * step_s;
        (b.value - a.value).abs() >= p.min_amplitude
            && (p.min_wavelength_s..=p.max_wavelength_s).contains(&wavelength)
    };

    let mut events = Vec::new();
    let mut k = 0;
    while k + 1 < extrema.len() {
        if !qualifies(&extrema[k], &extrema[k + 1]) {
            k += 1;
            continue;
        }
        let mut end = k + 1;
        while end + 1 < extrema.len() && qualifies(&extrema[end], &extrema[end + 1]) {
            end += 1;
        }
        let half_cycles = end - k;
        if half_cycles >= 2 {
            let (first, last) = (&extrema[k], &extrema[end]);
            let swing: f64 = extrema[k..=end]
                .windows(2)
                .map(|w| (w[1].value - w[0].value).abs())
                .sum();
            let duration = (last.index - first.index) as f64 * step_s;
            events.push(TauEvent {
                start_s: offset_s + first.index as f64 * step_s,
                end_s: offset_s + last.index as f64 * step_s,
                n_cycles: half_cycles / 2,
                mean_wavelength_s: 2.0 * duration / half_cycles as f64,
                peak_to_trough: swing / half_cycles as f64,
                channel: channel.to_string(),
            });
        }
        k = end;
    }
    Ok(events)
}

/// [`detect_tau`] on a named hypnogram channel.
pub fn detect_tau_in(h: &ContinuousHypnogram, label: &str, p: &TauParams) -> Result<Vec<TauEvent>> {
    let values = h.values(label)?;
    let name = h.channel(label).map(|c| c.label.as_str()).unwrap_or(label);
    detect_tau(values, h.step_s, 0.0, name, p)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SyncInput {
    /// Moving-median detrended rates, as used for τ detection.
    #[default]
    Detrended,
    Raw,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynchronySeries {
    pub window_s: f64,
    pub step_s: f64,
    /// Start of each window, seconds from the series start.
    pub starts_s: Vec<f64>,
    /// Pearson correlation per window; `None` with fewer than
    /// [`MIN_SYNC_PAIRS`] present pairs or a constant channel.
    pub values: Vec<Option<f64>>,
}

pub const MIN_SYNC_PAIRS: usize = 30;

/// Pearson correlation over pairs where both values are present.
pub fn pearson(a: &[Option<f64>], b: &[Option<f64>]) -> Option<f64> {
    let pairs: Vec<(f64, f64)> = a
        .iter()
        .zip(b)
        .filter_map(|(x, y)| Some(((*x)?, (*y)?)))
        .collect();
    if pairs.len() < MIN_SYNC_PAIRS {
        return None;
    }
    let n = pairs.len() as f64;
    let mx = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for &(x, y) in &pairs {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Sliding-window correlation of two equally sampled series. Windows start
/// every `step_s` seconds and must fit entirely inside the series.
pub fn synchrony(
    a: &[Option<f64>],
    b: &[Option<f64>],
    series_step_s: f64,
    window_s: f64,
    step_s: f64,
) -> Result<SynchronySeries> {
    if a.len() != b.len() {
        return Err(Error::Length(format!(
            "synchrony needs equal lengths, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    if !(series_step_s > 0.0 && window_s > 0.0 && step_s > 0.0) {
        return Err(Error::param("synchrony", "window, step and series step must be positive"));
    }
    let w = (window_s / series_step_s).round() as usize;
    let s = ((step_s / series_step_s).round() as usize).max(1);
    let mut starts_s = Vec::new();
    let mut values = Vec::new();
    let mut start = 0;
    while w > 0 && start + w <= a.len() {
        starts_s.push(start as f64 * series_step_s);
        values.push(pearson(&a[start..start + w], &b[start..start + w]));
        start += s;
    }
    Ok(SynchronySeries {
        window_s,
        step_s,
        starts_s,
        values,
    })
}

/// Synchrony of two hypnogram channels on detrended or raw smoothed rates.
/// Missing positions stay missing after detrending.
pub fn channel_synchrony(
    h: &ContinuousHypnogram,
    a: &str,
    b: &str,
    window_s: f64,
    step_s: f64,
    input: SyncInput,
    p: &TauParams,
) -> Result<SynchronySeries> {
    let (va, vb) = (h.values(a)?, h.values(b)?);
    match input {
        SyncInput::Raw => synchrony(va, vb, h.step_s, window_s, step_s),
        SyncInput::Detrended => {
            let window = p.detrend_window(h.step_s);
            let prep = |v: &[Option<f64>]| -> Vec<Option<f64>> {
                match detrend(v, window) {
                    Some(d) => d.into_iter().zip(v).map(|(x, o)| o.map(|_| x)).collect(),
                    None => vec![None; v.len()],
                }
            };
            synchrony(&prep(va), &prep(vb), h.step_s, window_s, step_s)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn sine_series(n: usize, period: f64, amp: f64) -> Vec<Option<f64>> {
        (0..n)
            .map(|t| Some(0.3 + amp * (2.0 * PI * t as f64 / period).sin()))
            .collect()
    }

    #[test]
    fn constant_has_no_events() {
        let v = vec![Some(0.33); 1800];
        assert!(detect_tau(&v, 1.0, 0.0, "c", &TauParams::default()).unwrap().is_empty());
    }

    #[test]
    fn sixty_second_sine_is_one_event() {
        let v = sine_series(1200, 60.0, 0.05);
        let events = detect_tau(&v, 1.0, 0.0, "Fp2-F4", &TauParams::default()).unwrap();
        assert_eq!(events.len(), 1);
        let e = &events[0];
        assert!((e.mean_wavelength_s - 60.0).abs() <= 5.0, "{e:?}");
        assert!((e.peak_to_trough - 0.10).abs() <= 0.01, "{e:?}");
        assert!(e.start_s <= 60.0 && e.end_s >= 1140.0, "{e:?}");
        assert!(e.n_cycles >= 18);
        assert_eq!(e.channel, "Fp2-F4");
    }

    #[test]
    fn out_of_band_wavelengths_ignored() {
        // 10 s and 400 s periods both fall outside 30..120 s.
        for period in [10.0, 400.0] {
            let v = sine_series(2400, period, 0.05);
            let events = detect_tau(&v, 1.0, 0.0, "x", &TauParams::default()).unwrap();
            assert!(events.is_empty(), "period {period}: {events:?}");
        }
    }

    #[test]
    fn preconditions() {
        let p = TauParams::default();
        assert!(matches!(detect_tau(&[Some(0.3); 60], 1.0, 0.0, "x", &p), Err(Error::Detection(_))));
        let mut v = vec![Some(0.3); 600];
        for x in v.iter_mut().take(100) {
            *x = None;
        }
        assert!(matches!(detect_tau(&v, 1.0, 0.0, "x", &p), Err(Error::Detection(_))));
        let bad = TauParams {
            min_wavelength_s: 120.0,
            max_wavelength_s: 30.0,
            ..p
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn offset_shifts_events() {
        let v = sine_series(900, 45.0, 0.04);
        let p = TauParams::default();
        let a = detect_tau(&v, 1.0, 0.0, "x", &p).unwrap();
        let b = detect_tau(&v, 1.0, 250.0, "x", &p).unwrap();
        assert!(!a.is_empty());
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(y.start_s - x.start_s, 250.0);
            assert_eq!(y.end_s - x.end_s, 250.0);
            assert_eq!(x.mean_wavelength_s, y.mean_wavelength_s);
        }
    }

    #[test]
    fn moving_median_matches_sorting() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x: Vec<f64> = (0..300).map(|_| rng.random_range(0.0..1.0)).collect();
        let fast = moving_median(&x, 41);
        for (i, m) in fast.iter().enumerate() {
            let lo = i.saturating_sub(20);
            let hi = (i + 21).min(x.len());
            let mut w = x[lo..hi].to_vec();
            w.sort_by(f64::total_cmp);
            let k = w.len();
            let expected = if k % 2 == 1 { w[k / 2] } else { 0.5 * (w[k / 2 - 1] + w[k / 2]) };
            assert_eq!(*m, expected);
        }
    }

    #[test]
    fn gaps_are_interpolated() {
        let v = [None, Some(1.0), None, None, Some(4.0), None];
        assert_eq!(fill_missing(&v).unwrap(), vec![1.0, 1.0, 2.0, 3.0, 4.0, 4.0]);
        assert!(fill_missing(&[None, None]).is_none());
    }

    #[test]
    fn hysteresis_ignores_small_wiggles() {
        let x = [0.0, 0.005, 0.0, 0.02, 0.015, 0.03, 0.0, 0.03];
        let e = hysteresis_extrema(&x, 0.01);
        let idx: Vec<usize> = e.iter().map(|e| e.index).collect();
        assert_eq!(idx, vec![0, 5, 6]);
        assert!(!e[0].is_peak && e[1].is_peak && !e[2].is_peak);
    }

    #[test]
    fn self_synchrony_is_exactly_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a: Vec<Option<f64>> = (0..1200).map(|_| Some(rng.random_range(0.2..0.4))).collect();
        let s = synchrony(&a, &a, 1.0, 300.0, 30.0).unwrap();
        assert_eq!(s.values.len(), 31);
        assert!(s.values.iter().all(|v| *v == Some(1.0)));
    }

    #[test]
    fn mirrored_synchrony_is_minus_one() {
        let a = sine_series(900, 70.0, 0.03);
        let mean = a.iter().flatten().sum::<f64>() / a.len() as f64;
        let b: Vec<Option<f64>> = a.iter().map(|v| v.map(|x| 2.0 * mean - x)).collect();
        let s = synchrony(&a, &b, 1.0, 300.0, 30.0).unwrap();
        assert!(s.values.iter().all(|v| (v.unwrap() + 1.0).abs() < 1e-12));
    }

    #[test]
    fn sparse_windows_are_missing() {
        let mut a = sine_series(300, 60.0, 0.05);
        for v in a.iter_mut().skip(25) {
            *v = None;
        }
        let s = synchrony(&a, &a, 1.0, 300.0, 30.0).unwrap();
        assert_eq!(s.values, vec![None]);
        assert!(synchrony(&a, &a[1..], 1.0, 300.0, 30.0).is_err());
    }

    proptest! {
        #[test]
        fn raising_amplitude_never_adds_coverage(
            seed in 0u64..1000,
            low in 0.0f64..0.03,
            extra in 0.0f64..0.05,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            // Random-walk rates with infra-slow structure.
            let mut x = 0.3;
            let v: Vec<Option<f64>> = (0..900)
                .map(|t| {
                    x += rng.random_range(-0.004..0.004);
                    Some(x + 0.03 * (2.0 * PI * t as f64 / rng.random_range(40.0..90.0)).sin())
                })
                .collect();
            let p = TauParams { min_amplitude: low, ..Default::default() };
            let q = TauParams { min_amplitude: low + extra, ..Default::default() };
            let loose = detect_tau(&v, 1.0, 0.0, "x", &p).unwrap();
            let strict = detect_tau(&v, 1.0, 0.0, "x", &q).unwrap();
            for e in &strict {
                prop_assert!(loose.iter().any(|l| l.start_s <= e.start_s && e.end_s <= l.end_s));
            }
        }

        #[test]
        fn synchrony_is_affine_invariant(scale in 0.1f64..10.0, shift in -1.0f64..1.0, seed in 0u64..100) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a: Vec<Option<f64>> = (0..600).map(|_| Some(rng.random_range(0.2..0.4))).collect();
            let b: Vec<Option<f64>> = a.iter().map(|v| v.map(|x| x + rng.random_range(-0.05..0.05))).collect();
            let b2: Vec<Option<f64>> = b.iter().map(|v| v.map(|x| scale * x + shift)).collect();
            let s1 = synchrony(&a, &b, 1.0, 300.0, 30.0).unwrap();
            let s2 = synchrony(&a, &b2, 1.0, 300.0, 30.0).unwrap();
            for (x, y) in s1.values.iter().zip(&s2.values) {
                prop_assert!((x.unwrap() - y.unwrap()).abs() < 1e-9);
            }
        }
    }
}
