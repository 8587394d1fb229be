//! Acceptance suite. Prints one `PASS`, `FAIL` or `SKIP` line per criterion
//! and exits non-zero if any criterion fails. Criteria run one after another
//! so their time budgets are measured without contention.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use turnscope::hypnogram::{hypnogram_from_signals, moving_average, to_csv, to_json, to_svg, SvgOptions};
use turnscope::ingest::{parse_annotations, read_edf, Stage};
use turnscope::staging::epoch_means;
use turnscope::tau::{detect_tau, synchrony};
use turnscope::turning::{dither_series, epoch_rates, turning_rate, TiePolicy, TurningParams};
use turnscope::{build_hypnogram, generate, ChannelSpec, EdfRecord, SignalSeries, SynthKind, SynthSpec};

// Pinned tolerances and budgets.
const WHITE_NOISE_TOL: f64 = 0.01;
const WHITE_NOISE_BUDGET: Duration = Duration::from_secs(5);
const ORACLE_BUDGET: Duration = Duration::from_secs(60);
const VARIANCE_BAND: (f64, f64) = (0.25, 1.0);
const VARIANCE_T: f64 = 508.0;
const SMOOTHING_FACTOR: f64 = 10.0;
const TAU_WAVELENGTH: (f64, f64) = (60.0, 10.0);
const N5_REM_BAND: (f64, f64) = (0.29, 0.38);
const N5_S4_BAND: (f64, f64) = (0.16, 0.29);
const N5_FRACTION: f64 = 0.80;
const N5_WAKE_MEDIAN: f64 = 0.36;
const PIPELINE_BUDGET: Duration = Duration::from_secs(10);

enum Outcome {
    Pass(String),
    Fail(String),
    Skip(String),
}

type Check = std::result::Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> std::result::Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn noise(n: usize, seed: u64) -> SignalSeries {
    generate(&SynthSpec {
        kind: SynthKind::WhiteNoise { amplitude: 1.0 },
        fs: 512.0,
        duration_s: n as f64 / 512.0,
        seed,
    })
    .unwrap()
}

fn c1_white_noise() -> Check {
    let x = noise(1_000_000, 1);
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for d in 1..=8 {
        let r = turning_rate(&x.samples, d).map_err(|e| e.to_string())?;
        let dev = (r.rate.unwrap() - 2.0 / 3.0).abs();
        worst = worst.max(dev);
        ensure(dev <= WHITE_NOISE_TOL, || format!("d={d}: rate {:.5}", r.rate.unwrap()))?;
    }
    let took = start.elapsed();
    ensure(took < WHITE_NOISE_BUDGET, || format!("took {took:?}"))?;
    Ok(format!("max |rate - 2/3| = {worst:.5} over d=1..8, {took:.2?}"))
}

/// Definition-level recount: every sample with both neighbors inside the
/// series, binned by the epoch it falls in.
fn naive_counts(x: &[f64], epoch_len: usize, d: usize) -> (Vec<u32>, Vec<u32>) {
    let n_epochs = x.len().div_ceil(epoch_len);
    let mut turning = vec![0u32; n_epochs];
    let mut valid = vec![0u32; n_epochs];
    for t in 0..x.len() {
        if t < d || t + d >= x.len() {
            continue;
        }
        let (a, b, c) = (x[t - d], x[t], x[t + d]);
        if b == a || b == c {
            continue;
        }
        valid[t / epoch_len] += 1;
        if (b > a && b > c) || (b < a && b < c) {
            turning[t / epoch_len] += 1;
        }
    }
    (turning, valid)
}

fn c2_brute_force() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let start = Instant::now();
    let mut ties_seen = 0u64;
    for case in 0..1000 {
        let d = rng.random_range(1..=16);
        let len = rng.random_range(2 * d + 1..=10_000);
        let epoch_len = rng.random_range(2 * d + 1..=600);
        let samples: Vec<f64> = if rng.random_bool(0.5) {
            let levels = rng.random_range(2..20);
            (0..len).map(|_| f64::from(rng.random_range(0..levels))).collect()
        } else {
            (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()
        };
        let x = SignalSeries::new("x", epoch_len as f64, samples).unwrap();
        let policy = if rng.random_bool(0.5) { TiePolicy::Exclude } else { TiePolicy::Dither };
        let p = TurningParams {
            delay: d,
            tie_policy: policy,
            seed: case,
            ..Default::default()
        };
        let got = epoch_rates(&x, 1.0, &p).map_err(|e| e.to_string())?;
        let input = match policy {
            TiePolicy::Exclude => x.samples.clone(),
            TiePolicy::Dither => dither_series(&x, p.dither_amplitude, p.seed).unwrap().samples,
        };
        let (turning, valid) = naive_counts(&input, epoch_len, d);
        ensure(got.turning_counts == turning && got.valid_counts == valid, || {
            format!("case {case}: d={d} len={len} epoch={epoch_len} {policy:?} differs")
        })?;
        for ((r, &t), &v) in got.rates.iter().zip(&turning).zip(&valid) {
            let expected = (v > 0).then(|| f64::from(t) / f64::from(v));
            ensure(*r == expected, || format!("case {case}: rate {r:?} != {expected:?}"))?;
        }
        let comparable = len.saturating_sub(2 * d) as u64;
        ties_seen += comparable - valid.iter().map(|&v| u64::from(v)).sum::<u64>();
    }
    let took = start.elapsed();
    ensure(ties_seen > 0, || "fixtures produced no ties".into())?;
    ensure(took < ORACLE_BUDGET, || format!("took {took:?}"))?;
    Ok(format!("1000 series identical, {ties_seen} ties excluded, {took:.2?}"))
}

fn iid_epoch_rates(seconds: usize, seed: u64) -> Vec<Option<f64>> {
    let x = noise(seconds * 512, seed);
    epoch_rates(&x, 1.0, &TurningParams::with_delay(4)).unwrap().rates
}

fn std_dev(v: &[f64]) -> f64 {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

fn c3_variance() -> Check {
    let rates: Vec<f64> = iid_epoch_rates(3600, 3).into_iter().flatten().collect();
    let sd = std_dev(&rates);
    let (lo, hi) = (VARIANCE_BAND.0 / VARIANCE_T.sqrt(), VARIANCE_BAND.1 / VARIANCE_T.sqrt());
    ensure((lo..=hi).contains(&sd), || format!("sd {sd:.5} outside [{lo:.5}, {hi:.5}]"))?;
    Ok(format!("sd {sd:.5} in [{lo:.5}, {hi:.5}] over {} epochs", rates.len()))
}

fn c4_smoothing() -> Check {
    let rates = iid_epoch_rates(3600, 4);
    let s = moving_average(&rates, 31).map_err(|e| e.to_string())?;
    let raw: Vec<f64> = rates.iter().flatten().copied().collect();
    let smooth: Vec<f64> = s
        .values
        .iter()
        .zip(&s.edge)
        .filter(|(_, e)| !**e)
        .filter_map(|(v, _)| *v)
        .collect();
    let factor = std_dev(&raw).powi(2) / std_dev(&smooth).powi(2);
    ensure(factor >= SMOOTHING_FACTOR, || format!("variance reduced only {factor:.2}x"))?;

    let mut impulse = vec![Some(0.0); 101];
    impulse[50] = Some(1.0);
    let r = moving_average(&impulse, 31).map_err(|e| e.to_string())?;
    for (i, v) in r.values.iter().enumerate() {
        let expected = if (35..=65).contains(&i) { 1.0 / 31.0 } else { 0.0 };
        ensure(*v == Some(expected), || format!("impulse response at {i}: {v:?}"))?;
    }
    Ok(format!("variance reduced {factor:.1}x; impulse response 1/31 on 31 positions"))
}

fn c5_invariance() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for case in 0..100 {
        // Integer codes as in EDF data: transforms stay exact and ties occur.
        let len = rng.random_range(50..5000);
        let x: Vec<f64> = (0..len).map(|_| f64::from(rng.random_range(-300i32..300))).collect();
        let reversed: Vec<f64> = x.iter().rev().copied().collect();
        let flipped: Vec<f64> = x.iter().map(|v| -v).collect();
        let monotone: Vec<f64> = x.iter().map(|v| v * v * v + 7.0 * v + 1.0).collect();
        for d in [1, 4, 9] {
            let base = turning_rate(&x, d).unwrap();
            for (name, y) in [("reversal", &reversed), ("sign flip", &flipped), ("monotone", &monotone)] {
                let other = turning_rate(y, d).unwrap();
                ensure(other == base, || format!("case {case} d={d}: {name} changed {base:?} to {other:?}"))?;
            }
        }
    }
    Ok("100 series x 3 transforms x d in {1,4,9}: identical counts".into())
}

fn start_time() -> chrono::NaiveDateTime {
    NaiveDate::from_ymd_opt(2024, 3, 1).unwrap().and_hms_opt(22, 30, 0).unwrap()
}

fn fixture_record(seconds: usize, fs: f64) -> EdfRecord {
    let mk = |label: &str, seed: u64, kind: SynthKind| {
        let mut s = generate(&SynthSpec {
            kind,
            fs,
            duration_s: seconds as f64,
            seed,
        })
        .unwrap();
        s.label = label.into();
        s
    };
    let signals = vec![
        mk("Fp2-F4", 61, SynthKind::WhiteNoise { amplitude: 100.0 }),
        mk("C4-P4", 62, SynthKind::Ar1 { phi: 0.8, sigma: 20.0 }),
    ];
    EdfRecord::from_signals("fixture", start_time(), signals).unwrap()
}

fn c6_determinism() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = dir.path().join("fixture.edf");
    std::fs::write(&path, fixture_record(600, 256.0).to_bytes().unwrap()).map_err(|e| e.to_string())?;
    let specs = [ChannelSpec::Named("Fp2-F4".into()), ChannelSpec::Named("C4-P4".into())];
    let run = |k: usize| -> std::result::Result<(Vec<u8>, Vec<u8>), String> {
        let rec = read_edf(&path).map_err(|e| e.to_string())?;
        let h = build_hypnogram(&rec, &specs, &TurningParams::default(), 1.0, 31).map_err(|e| e.to_string())?;
        let csv = dir.path().join(format!("run{k}.csv"));
        let json = dir.path().join(format!("run{k}.json"));
        turnscope::hypnogram::export(&h, turnscope::hypnogram::ExportFormat::Csv, &csv).map_err(|e| e.to_string())?;
        turnscope::hypnogram::export(&h, turnscope::hypnogram::ExportFormat::Json, &json).map_err(|e| e.to_string())?;
        Ok((std::fs::read(csv).unwrap(), std::fs::read(json).unwrap()))
    };
    let (a, b) = (run(1)?, run(2)?);
    ensure(a.0 == b.0, || "CSV differs between runs".into())?;
    ensure(a.1 == b.1, || "JSON differs between runs".into())?;
    Ok(format!("CSV ({} B) and JSON ({} B) byte-identical", a.0.len(), a.1.len()))
}

fn c7_tau() -> Check {
    let p = turnscope::TauParams::default();
    let (target, tol) = TAU_WAVELENGTH;

    let modulated: Vec<Option<f64>> = (0..1800)
        .map(|t| Some(0.3 + 0.05 * (2.0 * std::f64::consts::PI * t as f64 / 60.0).sin()))
        .collect();
    let events = detect_tau(&modulated, 1.0, 0.0, "fixture", &p).map_err(|e| e.to_string())?;
    ensure(!events.is_empty(), || "no event on the modulated fixture".into())?;
    ensure(events.iter().all(|e| (e.mean_wavelength_s - target).abs() <= tol), || {
        format!("wavelengths {:?}", events.iter().map(|e| e.mean_wavelength_s).collect::<Vec<_>>())
    })?;

    let constant = vec![Some(0.3); 1800];
    let none = detect_tau(&constant, 1.0, 0.0, "constant", &p).map_err(|e| e.to_string())?;
    ensure(none.is_empty(), || format!("{} events on constant input", none.len()))?;

    let s = synchrony(&modulated, &modulated, 1.0, 300.0, 30.0).map_err(|e| e.to_string())?;
    ensure(!s.values.is_empty() && s.values.iter().all(|v| *v == Some(1.0)), || {
        "self-synchrony is not exactly 1".into()
    })?;

    // End to end: 30 s noise blocks alternating with 30 s of a 2 Hz sine.
    let mixture = generate(&SynthSpec {
        kind: SynthKind::BlockMixture {
            block_s: 30.0,
            blocks: vec![
                SynthKind::WhiteNoise { amplitude: 1.0 },
                SynthKind::Sine {
                    frequency_hz: 2.0,
                    amplitude: 1.0,
                },
            ],
        },
        fs: 512.0,
        duration_s: 1200.0,
        seed: 7,
    })
    .unwrap();
    let h = hypnogram_from_signals(start_time(), &[mixture], &TurningParams::with_delay(4), 1.0, 31)
        .map_err(|e| e.to_string())?;
    let mixed = detect_tau(&h.channels[0].smoothed, 1.0, 0.0, "mixture", &p).map_err(|e| e.to_string())?;
    ensure(
        mixed.iter().any(|e| (e.mean_wavelength_s - target).abs() <= tol),
        || format!("block mixture events {mixed:?}"),
    )?;

    Ok(format!(
        "modulated: {} event(s), wavelength {:.1} s; constant: 0 events; self-synchrony 1.0 on {} windows; block mixture wavelength {:.1} s",
        events.len(),
        events[0].mean_wavelength_s,
        s.values.len(),
        mixed[0].mean_wavelength_s
    ))
}

fn c8_cap_n5() -> Outcome {
    let (Ok(edf), Ok(annot)) = (std::env::var("CAP_N5_EDF"), std::env::var("CAP_N5_ANNOT")) else {
        return Outcome::Skip("set CAP_N5_EDF and CAP_N5_ANNOT (canonical onset/label text) to run".into());
    };
    let run = || -> Check {
        let rec = read_edf(&edf).map_err(|e| e.to_string())?;
        let specs = [ChannelSpec::Named("Fp2-F4".into()), ChannelSpec::Named("C4-P4".into())];
        let h = build_hypnogram(&rec, &specs, &TurningParams::with_delay(4), 1.0, 31).map_err(|e| e.to_string())?;
        let text = std::fs::read_to_string(&annot).map_err(|e| e.to_string())?;
        let stages = parse_annotations(&text, 30.0).map_err(|e| e.to_string())?;
        let frontal = epoch_means(h.values("Fp2-F4").unwrap(), h.step_s, 30.0).map_err(|e| e.to_string())?;
        let first = (stages.start_offset_s / 30.0).round() as usize;
        let rates_of = |stage: Stage| -> Vec<f64> {
            stages
                .labels
                .iter()
                .enumerate()
                .filter(|(_, s)| **s == stage)
                .filter_map(|(i, _)| frontal.get(first + i).copied().flatten())
                .collect()
        };
        let fraction_in = |v: &[f64], (lo, hi): (f64, f64)| {
            v.iter().filter(|r| (lo..=hi).contains(*r)).count() as f64 / v.len().max(1) as f64
        };
        let rem = rates_of(Stage::Rem);
        let s4 = rates_of(Stage::S4);
        let mut wake = rates_of(Stage::W);
        wake.sort_by(f64::total_cmp);
        let f_rem = fraction_in(&rem, N5_REM_BAND);
        let f_s4 = fraction_in(&s4, N5_S4_BAND);
        let median_wake = wake.get(wake.len() / 2).copied().unwrap_or(f64::NAN);
        let detail = format!(
            "REM {f_rem:.2} of {} in band, S4 {f_s4:.2} of {} in band, wake median {median_wake:.3}",
            rem.len(),
            s4.len()
        );
        ensure(f_rem >= N5_FRACTION && f_s4 >= N5_FRACTION && median_wake > N5_WAKE_MEDIAN, || detail.clone())?;
        Ok(detail)
    };
    match run() {
        Ok(s) => Outcome::Pass(s),
        Err(s) => Outcome::Fail(s),
    }
}

fn c9_performance() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = dir.path().join("night.edf");
    let rec = fixture_record(8 * 3600, 512.0);
    let samples: usize = rec.signals.iter().map(|s| s.len()).sum();
    std::fs::write(&path, rec.to_bytes().unwrap()).map_err(|e| e.to_string())?;
    drop(rec);

    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().map_err(|e| e.to_string())?;
    let start = Instant::now();
    let sizes = pool.install(|| -> std::result::Result<usize, String> {
        let rec = read_edf(&path).map_err(|e| e.to_string())?;
        let specs = [ChannelSpec::Named("Fp2-F4".into()), ChannelSpec::Named("C4-P4".into())];
        let h = build_hypnogram(&rec, &specs, &TurningParams::with_delay(4), 1.0, 31).map_err(|e| e.to_string())?;
        let csv = to_csv(&h).map_err(|e| e.to_string())?;
        let json = to_json(&h).map_err(|e| e.to_string())?;
        let svg = to_svg(&h, &SvgOptions::default());
        for (name, text) in [("h.csv", &csv), ("h.json", &json), ("h.svg", &svg)] {
            std::fs::write(dir.path().join(name), text).map_err(|e| e.to_string())?;
        }
        Ok(h.len())
    })?;
    let took = start.elapsed();
    ensure(sizes == 8 * 3600, || format!("{sizes} epochs"))?;
    ensure(took < PIPELINE_BUDGET, || format!("took {took:?}"))?;
    Ok(format!("{samples} samples parsed, smoothed and exported in {took:.2?} on one thread"))
}

fn main() -> ExitCode {
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome>)> = vec![
        ("1 white-noise law", Box::new(|| c1_white_noise().into())),
        ("2 brute-force oracle", Box::new(|| c2_brute_force().into())),
        ("3 variance law", Box::new(|| c3_variance().into())),
        ("4 smoothing", Box::new(|| c4_smoothing().into())),
        ("5 invariance suite", Box::new(|| c5_invariance().into())),
        ("6 determinism", Box::new(|| c6_determinism().into())),
        ("7 tau-wave oracle", Box::new(|| c7_tau().into())),
        ("8 CAP n5 integration", Box::new(c8_cap_n5)),
        ("9 performance", Box::new(|| c9_performance().into())),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Outcome::Fail(format!("panicked: {msg}"))
        });
        match outcome {
            Outcome::Pass(s) => println!("PASS {name}: {s}"),
            Outcome::Skip(s) => println!("SKIP {name}: {s}"),
            Outcome::Fail(s) => {
                failed += 1;
                println!("FAIL {name}: {s}");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

impl From<Check> for Outcome {
    fn from(c: Check) -> Self {
        match c {
            Ok(s) => Outcome::Pass(s),
            Err(s) => Outcome::Fail(s),
        }
    }
}
