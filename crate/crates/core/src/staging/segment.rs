//! Piecewise-linear block segmentation of one smoothed rate channel.
//!
//! Fast level changes are found first from the difference of adjacent
//! window means and always separate blocks. Between them, a line is grown
//! from each block start until some sample deviates from the least-squares
//! fit by more than `max_residual`; the break is then placed where two lines
//! fit the grown window best. Short blocks are merged into the neighbor with
//! the closer level, and adjacent blocks of the same kind are joined.

use serde::{Deserialize, Serialize};

use super::StageThresholds;
use crate::error::{Error, Result};
use crate::hypnogram::ContinuousHypnogram;
use crate::tau::fill_missing;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SegmentParams {
    pub min_len_s: f64,
    /// Slopes at or below minus this value (rate units per minute) are
    /// decreasing.
    pub slope_eps_per_min: f64,
    /// Level change that counts as a jump.
    pub jump: f64,
    /// Span over which a jump must happen.
    pub jump_window_s: f64,
    /// Largest tolerated deviation from a block's fitted line while growing.
    pub max_residual: f64,
}

impl Default for SegmentParams {
    fn default() -> Self {
        SegmentParams {
            min_len_s: 300.0,
            slope_eps_per_min: 0.01,
            jump: 0.05,
            jump_window_s: 60.0,
            max_residual: 0.025,
        }
    }
}

impl SegmentParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("segment.min_len_s", self.min_len_s),
            ("segment.slope_eps_per_min", self.slope_eps_per_min),
            ("segment.jump", self.jump),
            ("segment.jump_window_s", self.jump_window_s),
            ("segment.max_residual", self.max_residual),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::param(name, format!("must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockKind {
    Decreasing,
    ConstantWake,
    ConstantRem,
    ConstantS2,
}

impl BlockKind {
    pub fn as_str(self) -> &'static str {
        match self {
            BlockKind::Decreasing => "decreasing",
            BlockKind::ConstantWake => "constant_wake",
            BlockKind::ConstantRem => "constant_rem",
            BlockKind::ConstantS2 => "constant_s2",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub start_s: f64,
    pub end_s: f64,
    pub kind: BlockKind,
    /// Rate units per minute.
    pub slope: f64,
    /// Mean rate over the block.
    pub level: f64,
}

/// Prefix sums for O(1) least-squares fits over index ranges.
struct Sums {
    t: Vec<f64>,
    x: Vec<f64>,
    tt: Vec<f64>,
    tx: Vec<f64>,
    xx: Vec<f64>,
}

struct Fit {
    slope: f64,
    intercept: f64,
    mean: f64,
    sse: f64,
}

impl Sums {
    fn new(x: &[f64]) -> Self {
        let n = x.len();
        let mut s = Sums {
            t: Vec::with_capacity(n + 1),
            x: Vec::with_capacity(n + 1),
            tt: Vec::with_capacity(n + 1),
            tx: Vec::with_capacity(n + 1),
            xx: Vec::with_capacity(n + 1),
        };
        let (mut a, mut b, mut c, mut d, mut e) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for v in [&mut s.t, &mut s.x, &mut s.tt, &mut s.tx, &mut s.xx] {
            v.push(0.0);
        }
        for (i, &v) in x.iter().enumerate() {
            let t = i as f64;
            a += t;
            b += v;
            c += t * t;
            d += t * v;
            e += v * v;
            s.t.push(a);
            s.x.push(b);
            s.tt.push(c);
            s.tx.push(d);
            s.xx.push(e);
        }
        s
    }

    /// Line through samples `lo..hi` (at least one sample).
    fn fit(&self, lo: usize, hi: usize) -> Fit {
        let m = (hi - lo) as f64;
        let st = self.t[hi] - self.t[lo];
        let sx = self.x[hi] - self.x[lo];
        let stt = self.tt[hi] - self.tt[lo] - st * st / m;
        let stx = self.tx[hi] - self.tx[lo] - st * sx / m;
        let sxx = self.xx[hi] - self.xx[lo] - sx * sx / m;
        let mean = sx / m;
        let slope = if stt > 0.0 { stx / stt } else { 0.0 };
        let intercept = mean - slope * st / m;
        let sse = if stt > 0.0 { sxx - stx * stx / stt } else { sxx };
        Fit {
            slope,
            intercept,
            mean,
            sse: sse.max(0.0),
        }
    }
}

fn max_residual(x: &[f64], sums: &Sums, lo: usize, hi: usize) -> f64 {
    let f = sums.fit(lo, hi);
    (lo..hi)
        .map(|i| (x[i] - (f.intercept + f.slope * i as f64)).abs())
        .fold(0.0, f64::max)
}

/// Indices where the mean of the following `half` samples differs from the
/// mean of the preceding `half` by more than `jump`, after non-maximum
/// suppression.
fn find_jumps(sums: &Sums, n: usize, half: usize, jump: f64) -> Vec<usize> {
    if n < 2 * half {
        return Vec::new();
    }
    let h = half as f64;
    let diff: Vec<f64> = (half..=n - half)
        .map(|i| ((sums.x[i + half] - sums.x[i]) - (sums.x[i] - sums.x[i - half])) / h)
        .collect();
    let mut out: Vec<usize> = Vec::new();
    for (k, d) in diff.iter().enumerate() {
        if d.abs() <= jump {
            continue;
        }
        let lo = k.saturating_sub(half);
        let hi = (k + half + 1).min(diff.len());
        let is_max = diff[lo..hi].iter().all(|o| o.abs() <= d.abs());
        let i = k + half;
        if is_max && out.last().is_none_or(|&last| i - last > half) {
            out.push(i);
        }
    }
    out
}

/// Best split of `lo..hi` into two fitted lines, each with at least two
/// samples.
fn best_split(sums: &Sums, lo: usize, hi: usize) -> usize {
    let mut best = (f64::INFINITY, lo + (hi - lo) / 2);
    for b in lo + 2..=hi.saturating_sub(2) {
        let sse = sums.fit(lo, b).sse + sums.fit(b, hi).sse;
        if sse < best.0 {
            best = (sse, b);
        }
    }
    best.1
}

fn grow(x: &[f64], sums: &Sums, lo: usize, hi: usize, step: usize, tol: f64, breaks: &mut Vec<usize>) {
    let mut s = lo;
    while s < hi {
        let mut e = (s + step.max(3)).min(hi);
        loop {
            if e == hi {
                s = hi;
                break;
            }
            let next = (e + step).min(hi);
            if max_residual(x, sums, s, next) <= tol {
                e = next;
                continue;
            }
            let b = if next - s >= 4 { best_split(sums, s, next) } else { e };
            breaks.push(b);
            s = b;
            break;
        }
    }
}

struct Span {
    lo: usize,
    hi: usize,
    /// Whether the boundary at `lo` is a jump.
    jump_before: bool,
}

fn kind_of(slope_per_min: f64, level: f64, th: &StageThresholds, p: &SegmentParams) -> BlockKind {
    if slope_per_min <= -p.slope_eps_per_min {
        BlockKind::Decreasing
    } else if level > th.wake_min {
        BlockKind::ConstantWake
    } else if level >= th.rem_band.0 {
        BlockKind::ConstantRem
    } else {
        BlockKind::ConstantS2
    }
}

/// Blocks tiling a smoothed rate series sampled every `step_s` seconds.
/// Missing values are interpolated before fitting.
pub fn segment_blocks(
    values: &[Option<f64>],
    step_s: f64,
    th: &StageThresholds,
    p: &SegmentParams,
) -> Result<Vec<Block>> {
    p.validate()?;
    th.validate()?;
    let n = values.len();
    if !(step_s > 0.0) || (n as f64) * step_s < p.min_len_s {
        return Err(Error::Segmentation(format!(
            "{} s of data is shorter than the minimal block length {} s",
            n as f64 * step_s,
            p.min_len_s
        )));
    }
    let x = fill_missing(values).ok_or_else(|| Error::Segmentation("no values present".into()))?;
    let sums = Sums::new(&x);
    let per_min = 60.0 / step_s;
    let fit_of = |lo: usize, hi: usize| {
        let f = sums.fit(lo, hi);
        (f.slope * per_min, f.mean)
    };
    let kind = |lo: usize, hi: usize| {
        let (slope, level) = fit_of(lo, hi);
        kind_of(slope, level, th, p)
    };

    let half = ((p.jump_window_s / 2.0 / step_s).round() as usize).max(1);
    let jumps = find_jumps(&sums, n, half, p.jump);
    let growth = ((10.0 / step_s).round() as usize).max(1);

    let mut spans: Vec<Span> = Vec::new();
    let mut seg_lo = 0;
    for hi in jumps.iter().copied().chain(std::iter::once(n)) {
        let mut breaks = vec![seg_lo];
        grow(&x, &sums, seg_lo, hi, growth, p.max_residual, &mut breaks);
        breaks.push(hi);
        for (k, w) in breaks.windows(2).enumerate() {
            spans.push(Span {
                lo: w[0],
                hi: w[1],
                jump_before: k == 0 && seg_lo > 0,
            });
        }
        seg_lo = hi;
    }

    let min_pts = (p.min_len_s / step_s).ceil() as usize;
    // Merge the shortest undersized block into its closer-level neighbor.
    while spans.len() > 1 {
        let Some((i, _)) = spans
            .iter()
            .enumerate()
            .filter(|(_, s)| s.hi - s.lo < min_pts)
            .min_by_key(|(i, s)| (s.hi - s.lo, *i))
        else {
            break;
        };
        let level = fit_of(spans[i].lo, spans[i].hi).1;
        let into_left = match (i.checked_sub(1), spans.get(i + 1)) {
            (Some(l), Some(r)) => {
                let dl = (fit_of(spans[l].lo, spans[l].hi).1 - level).abs();
                let dr = (fit_of(r.lo, r.hi).1 - level).abs();
                dl <= dr
            }
            (Some(_), None) => true,
            _ => false,
        };
        if into_left {
            let s = spans.remove(i);
            spans[i - 1].hi = s.hi;
        } else {
            let s = spans.remove(i);
            spans[i].lo = s.lo;
            spans[i].jump_before = s.jump_before;
        }
    }
    // Join neighbors of one kind unless a jump separates them.
    let mut i = 1;
    while i < spans.len() {
        let (a, b) = (&spans[i - 1], &spans[i]);
        let k = kind(a.lo, a.hi);
        if !b.jump_before && k == kind(b.lo, b.hi) && k == kind(a.lo, b.hi) {
            let s = spans.remove(i);
            spans[i - 1].hi = s.hi;
            i = 1;
        } else {
            i += 1;
        }
    }

    Ok(spans
        .iter()
        .map(|s| {
            let (slope, level) = fit_of(s.lo, s.hi);
            Block {
                start_s: s.lo as f64 * step_s,
                end_s: s.hi as f64 * step_s,
                kind: kind_of(slope, level, th, p),
                slope,
                level,
            }
        })
        .collect())
}

/// [`segment_blocks`] on a named hypnogram channel.
pub fn segment_channel(
    h: &ContinuousHypnogram,
    label: &str,
    th: &StageThresholds,
    p: &SegmentParams,
) -> Result<Vec<Block>> {
    segment_blocks(h.values(label)?, h.step_s, th, p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn run(x: &[f64]) -> Vec<Block> {
        let v: Vec<Option<f64>> = x.iter().map(|&x| Some(x)).collect();
        segment_blocks(&v, 1.0, &StageThresholds::default(), &SegmentParams::default()).unwrap()
    }

    fn assert_tiles(blocks: &[Block], n: usize, min_len: f64) {
        assert_eq!(blocks.first().unwrap().start_s, 0.0);
        assert_eq!(blocks.last().unwrap().end_s, n as f64);
        for w in blocks.windows(2) {
            assert_eq!(w[0].end_s, w[1].start_s);
        }
        assert!(blocks.iter().all(|b| b.end_s - b.start_s >= min_len));
    }

    #[test]
    fn flat_rem_level() {
        let b = run(&vec![0.33; 1200]);
        assert_eq!(b.len(), 1);
        assert_eq!(b[0].kind, BlockKind::ConstantRem);
        assert!(b[0].slope.abs() < 1e-12);
        assert!((b[0].level - 0.33).abs() < 1e-12);
    }

    #[test]
    fn linear_ramp_is_one_decreasing_block() {
        let x: Vec<f64> = (0..900).map(|t| 0.40 - 0.20 * t as f64 / 900.0).collect();
        let b = run(&x);
        assert_eq!(b.len(), 1);
        assert_eq!(b[0].kind, BlockKind::Decreasing);
        // Exact line: slope is -0.2/900 per second.
        assert!((b[0].slope - (-0.2 / 900.0 * 60.0)).abs() < 1e-9, "{}", b[0].slope);
    }

    #[test]
    fn ramp_flat_jump_flat() {
        let mut x: Vec<f64> = (0..600).map(|t| 0.40 - 0.12 * t as f64 / 600.0).collect();
        x.extend(std::iter::repeat_n(0.28, 600));
        x.extend(std::iter::repeat_n(0.33, 600));
        let b = run(&x);
        let kinds: Vec<BlockKind> = b.iter().map(|b| b.kind).collect();
        assert_eq!(
            kinds,
            [BlockKind::Decreasing, BlockKind::ConstantS2, BlockKind::ConstantRem]
        );
        assert!((b[0].end_s - 600.0).abs() <= 10.0, "{b:?}");
        assert!((b[1].end_s - 1200.0).abs() <= 10.0, "{b:?}");
        assert_tiles(&b, x.len(), 300.0);
    }

    #[test]
    fn jumps_separate_equal_kinds() {
        // Two S2-range levels separated by a sharp 0.053 drop stay apart even
        // though they share a kind.
        let mut x = vec![0.305; 600];
        x.extend(std::iter::repeat_n(0.252, 600));
        let b = run(&x);
        assert_eq!(b.len(), 2, "{b:?}");
        assert_eq!(b[0].end_s, 600.0);
    }

    #[test]
    fn too_short_is_an_error() {
        let v = vec![Some(0.3); 299];
        let r = segment_blocks(&v, 1.0, &StageThresholds::default(), &SegmentParams::default());
        assert!(matches!(r, Err(Error::Segmentation(_))));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn blocks_tile_the_series(seed in 0u64..10_000, n in 300usize..4000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut level: f64 = 0.3;
            let x: Vec<f64> = (0..n)
                .map(|_| {
                    if rng.random_bool(0.002) {
                        level += rng.random_range(-0.1..0.1);
                    }
                    level += rng.random_range(-0.002..0.002);
                    level.clamp(0.05, 0.6)
                })
                .collect();
            let b = run(&x);
            assert_tiles(&b, n, 300.0);
        }
    }
}
