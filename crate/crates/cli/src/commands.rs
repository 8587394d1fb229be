use std::collections::HashSet;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use log::{info, warn};
use rayon::prelude::*;
use serde_json::json;
use turnscope::hypnogram::{export, read_csv, ExportFormat};
use turnscope::staging::{agreement, segment_channel, ScoringClass, SCORING_EPOCH_S};
use turnscope::tau::{channel_synchrony, detect_tau_in};
use turnscope::turning::turning_rate;
use turnscope::{
    build_hypnogram, classify_epochs, compare_annotations, generate, parse_annotations, read_edf,
    AnnotationSeries, Block, ChannelSpec, ContinuousHypnogram, EdfRecord, StagedEpochs, SynthKind,
    SynthSpec, TauEvent,
};

use crate::config::{settings, Cli, Command, CompareArgs, Settings, SynthArgs, SynthKindArg};
use crate::failure::{CliResult, Failure, Kind};

pub fn run(cli: Cli) -> CliResult {
    let s = settings(&cli)?;
    match &cli.command {
        Command::Hypnogram(_) => batch(&s, |p| hypnogram(&s, p)),
        Command::Tau(_) => batch(&s, |p| tau(&s, p)),
        Command::Stage(_) => batch(&s, |p| stage(&s, p)),
        Command::Compare(c) => compare(&s, c),
        Command::Synth(a) => synth(&s, a),
    }
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "output".into())
}

fn output(s: &Settings, path: &Path, suffix: &str) -> PathBuf {
    s.out_dir.join(format!("{}.{suffix}", stem(path)))
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> CliResult {
    std::fs::write(path, contents).map_err(|e| Failure::io(path, e))?;
    info!("wrote {}", path.display());
    Ok(())
}

/// Runs `f` on every input in parallel and reports the first failure in
/// input order.
fn batch(s: &Settings, f: impl Fn(&Path) -> CliResult + Sync) -> CliResult {
    if s.inputs.is_empty() {
        return Err(Failure::config("no input files given"));
    }
    let mut seen = HashSet::new();
    for p in &s.inputs {
        if !seen.insert(stem(p)) {
            return Err(Failure::config(format!(
                "inputs share the file stem {:?}; outputs would collide",
                stem(p)
            )));
        }
    }
    std::fs::create_dir_all(&s.out_dir).map_err(|e| Failure::io(&s.out_dir, e))?;
    let results: Vec<CliResult> = s.inputs.par_iter().map(|p| f(p).map_err(|e| e.at(p))).collect();
    results.into_iter().collect()
}

fn is_csv(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

/// Hypnogram of an EDF record, or a previously exported hypnogram CSV.
fn load_hypnogram(s: &Settings, path: &Path) -> CliResult<ContinuousHypnogram> {
    if is_csv(path) {
        let text = std::fs::read_to_string(path).map_err(|e| Failure::io(path, e))?;
        return Ok(read_csv(&text)?);
    }
    let record = read_edf(path)?;
    let specs: Vec<ChannelSpec> = if s.channels.is_empty() {
        record.signals.iter().map(|x| ChannelSpec::Named(x.label.clone())).collect()
    } else {
        s.channels.clone()
    };
    let h = build_hypnogram(&record, &specs, &s.turning, s.epoch_len_s, s.ma_length)?;
    for c in &h.channels {
        for w in c.quality.iter().flat_map(|q| q.warnings()) {
            warn!("{}: {}: {w}", path.display(), c.label);
        }
    }
    Ok(h)
}

fn hypnogram(s: &Settings, path: &Path) -> CliResult {
    let h = load_hypnogram(s, path)?;
    info!("{}: {} epochs, channels {:?}", path.display(), h.len(), h.labels());
    for f in &s.formats {
        let out = output(s, path, &format!("hypnogram.{}", f.extension()));
        export(&h, *f, &out)?;
        info!("wrote {}", out.display());
    }
    Ok(())
}

fn csv_text<R: serde::Serialize>(header: &[&str], rows: &[R]) -> CliResult<Vec<u8>> {
    let err = |e: csv::Error| Failure::new(Kind::Parse, e.to_string());
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(header).map_err(err)?;
    for r in rows {
        w.serialize(r).map_err(err)?;
    }
    w.into_inner().map_err(|e| Failure::new(Kind::Parse, e.to_string()))
}

fn json_text(v: &serde_json::Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("JSON value serializes");
    s.push('\n');
    s
}

fn tau(s: &Settings, path: &Path) -> CliResult {
    let h = load_hypnogram(s, path)?;
    let mut events: Vec<TauEvent> = Vec::new();
    for label in h.labels() {
        events.extend(detect_tau_in(&h, label, &s.tau)?);
    }
    info!("{}: {} tau event(s)", path.display(), events.len());
    let sync = match &h.channels[..] {
        [a, b, ..] => Some(channel_synchrony(
            &h,
            &a.label,
            &b.label,
            s.synchrony.window_s,
            s.synchrony.step_s,
            s.synchrony.input,
            &s.tau,
        )?),
        _ => None,
    };
    if s.wants(ExportFormat::Csv) {
        let header = ["start_s", "end_s", "n_cycles", "mean_wavelength_s", "peak_to_trough", "channel"];
        write(&output(s, path, "tau.csv"), csv_text(&header, &events)?)?;
        if let Some(sync) = &sync {
            let rows: Vec<(f64, Option<f64>)> =
                sync.starts_s.iter().copied().zip(sync.values.iter().copied()).collect();
            write(&output(s, path, "synchrony.csv"), csv_text(&["start_s", "r"], &rows)?)?;
        }
    }
    if s.wants(ExportFormat::Json) {
        let synchrony = sync.as_ref().map(|x| {
            json!({
                "channels": [h.channels[0].label, h.channels[1].label],
                "input": s.synchrony.input,
                "window_s": x.window_s,
                "step_s": x.step_s,
                "starts_s": x.starts_s,
                "values": x.values,
            })
        });
        let doc = json!({ "params": s.tau, "events": events, "synchrony": synchrony });
        write(&output(s, path, "tau.json"), json_text(&doc))?;
    }
    Ok(())
}

fn stage(s: &Settings, path: &Path) -> CliResult {
    let h = load_hypnogram(s, path)?;
    let staged = classify_epochs(&h, s.frontal.as_deref(), s.parietal.as_deref(), &s.thresholds)?;
    let frontal = staged.frontal_label.clone();
    let blocks: Vec<Block> = match segment_channel(&h, &frontal, &s.thresholds, &s.segment) {
        Ok(b) => b,
        Err(turnscope::Error::Segmentation(m)) => {
            warn!("{}: no block segmentation: {m}", path.display());
            Vec::new()
        }
        Err(e) => return Err(e.into()),
    };
    info!(
        "{}: {} epochs staged, {} block(s) on {frontal}",
        path.display(),
        staged.len(),
        blocks.len()
    );
    if s.wants(ExportFormat::Csv) {
        write(&output(s, path, "stages.csv"), staged.to_csv())?;
        let header = ["start_s", "end_s", "kind", "slope", "level"];
        write(&output(s, path, "blocks.csv"), csv_text(&header, &blocks)?)?;
    }
    if s.wants(ExportFormat::Json) {
        let doc = json!({
            "thresholds": s.thresholds,
            "segment": s.segment,
            "stages": staged,
            "blocks": blocks,
        });
        write(&output(s, path, "stage.json"), json_text(&doc))?;
    }
    Ok(())
}

fn read_text(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(|e| Failure::io(path, e))
}

fn is_stage_csv(text: &str) -> bool {
    text.lines()
        .find(|l| !l.trim().is_empty())
        .is_some_and(|l| l.starts_with("epoch,onset_s,stage"))
}

/// Agreement of two annotation series on a shared epoch grid; the expert
/// series must lie within the heuristic one.
fn compare_series(heuristic: &AnnotationSeries, expert: &AnnotationSeries) -> CliResult<turnscope::AgreementReport> {
    let len = expert.epoch_len_s;
    let shift = (expert.start_offset_s - heuristic.start_offset_s) / len;
    if (heuristic.epoch_len_s - len).abs() > 1e-9 || shift < -1e-6 || (shift - shift.round()).abs() > 1e-6 {
        return Err(Failure::new(Kind::Parse, "annotation grids do not align"));
    }
    let first = shift.round() as usize;
    let last = first + expert.labels.len();
    if last > heuristic.labels.len() {
        return Err(Failure::new(
            Kind::Parse,
            format!(
                "expert covers epochs {first}..{last}, heuristic only {}",
                heuristic.labels.len()
            ),
        ));
    }
    let classes: Vec<Option<ScoringClass>> = heuristic.labels[first..last]
        .iter()
        .map(|s| ScoringClass::from_stage(*s))
        .collect();
    Ok(agreement(&classes, &expert.labels, None)?)
}

fn compare(s: &Settings, c: &CompareArgs) -> CliResult {
    let htext = read_text(&c.heuristic)?;
    let etext = read_text(&c.expert)?;
    let report = if is_stage_csv(&htext) {
        let staged = StagedEpochs::from_csv(&htext).map_err(|e| Failure::from(e).at(&c.heuristic))?;
        let expert = parse_annotations(&etext, staged.epoch_len_s).map_err(|e| Failure::from(e).at(&c.expert))?;
        compare_annotations(&staged, &expert)?
    } else {
        let heuristic =
            parse_annotations(&htext, SCORING_EPOCH_S).map_err(|e| Failure::from(e).at(&c.heuristic))?;
        let expert = parse_annotations(&etext, SCORING_EPOCH_S).map_err(|e| Failure::from(e).at(&c.expert))?;
        compare_series(&heuristic, &expert)?
    };
    info!(
        "accuracy {:.4}, kappa {:.4} over {} epochs",
        report.epoch_accuracy, report.cohen_kappa, report.scored_epochs
    );
    std::fs::create_dir_all(&s.out_dir).map_err(|e| Failure::io(&s.out_dir, e))?;
    write(&output(s, &c.heuristic, "agreement.json"), report.to_json())?;
    write(&output(s, &c.heuristic, "agreement.txt"), report.to_text())?;
    Ok(())
}

fn synth_spec(s: &Settings, a: &SynthArgs) -> SynthSpec {
    let mut spec = match (a.kind, &s.synth) {
        (None, Some(spec)) => spec.clone(),
        (kind, _) => SynthSpec {
            kind: match kind.unwrap_or(SynthKindArg::WhiteNoise) {
                SynthKindArg::WhiteNoise => SynthKind::WhiteNoise { amplitude: a.amplitude },
                SynthKindArg::Sine => SynthKind::Sine {
                    frequency_hz: a.frequency,
                    amplitude: a.amplitude,
                },
                SynthKindArg::Ar1 => SynthKind::Ar1 {
                    phi: a.phi,
                    sigma: a.amplitude,
                },
            },
            fs: a.fs,
            duration_s: 60.0,
            seed: 0,
        },
    };
    if let Some(n) = a.samples {
        spec.duration_s = n as f64 / spec.fs;
    } else if let Some(d) = a.duration {
        spec.duration_s = d;
    }
    if let Some(seed) = s.seed {
        spec.seed = seed;
    }
    spec
}

fn synth(s: &Settings, a: &SynthArgs) -> CliResult {
    let spec = synth_spec(s, a);
    let series = generate(&spec)?;
    let name = series.label.clone();
    let start = NaiveDate::from_ymd_opt(2000, 1, 1)
        .and_then(|d| d.and_hms_opt(0, 0, 0))
        .expect("valid date");
    let record = EdfRecord::from_signals("synthetic", start, vec![series])?;
    let samples = &record.signals[0].samples;
    let d = s.turning.delay;
    let r = turning_rate(samples, d)?;

    std::fs::create_dir_all(&s.out_dir).map_err(|e| Failure::io(&s.out_dir, e))?;
    let edf = s.out_dir.join(format!("{name}.edf"));
    write(&edf, record.to_bytes()?)?;
    let expected = matches!(spec.kind, SynthKind::WhiteNoise { .. }).then_some(2.0 / 3.0);
    let doc = json!({
        "spec": spec,
        "edf": edf.file_name().map(|f| f.to_string_lossy()),
        "samples": samples.len(),
        "d": d,
        "turning_count": r.turning_count,
        "valid_count": r.valid_count,
        "rate": r.rate,
        "expected_rate": expected,
    });
    write(&s.out_dir.join(format!("{name}.synth.json")), json_text(&doc))?;
    match r.rate {
        Some(rate) => info!("{name}: {} samples, turning rate {rate:.5} at d={d}", samples.len()),
        None => info!("{name}: {} samples, no comparable samples at d={d}", samples.len()),
    }
    Ok(())
}
