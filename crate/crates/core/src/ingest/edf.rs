//! EDF reader and writer.
//!
//! Layout: a 256-byte fixed header, then `ns × 256` bytes of per-signal
//! fields stored field-major (all labels, then all transducers, ...), then
//! data records of little-endian 16-bit two's-complement samples.

use std::path::Path;

use chrono::{NaiveDate, NaiveDateTime};
use serde::{Deserialize, Serialize};

use super::{QualityReport, SignalSeries, SignalSource};
use crate::error::{Error, Result};

const FIXED_HEADER: usize = 256;

// Per-signal field widths in on-disk order.
const W_LABEL: usize = 16;
const W_TRANSDUCER: usize = 80;
const W_DIMENSION: usize = 8;
const W_NUMBER: usize = 8;
const W_PREFILTER: usize = 80;
const W_RESERVED: usize = 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalHeader {
    pub label: String,
    pub transducer: String,
    pub physical_dimension: String,
    pub physical_min: f64,
    pub physical_max: f64,
    pub digital_min: i32,
    pub digital_max: i32,
    pub prefilter: String,
    pub samples_per_record: usize,
}

impl SignalHeader {
    fn span(&self) -> (f64, f64) {
        (
            self.physical_max - self.physical_min,
            f64::from(self.digital_max - self.digital_min),
        )
    }

    /// Linear map from the digital range onto the physical range; the range
    /// endpoints map exactly onto each other.
    pub fn to_physical(&self, digital: i32) -> f64 {
        let (phys, dig) = self.span();
        self.physical_min + f64::from(digital - self.digital_min) * phys / dig
    }

    /// Nearest digital code for a physical value, clamped to the digital range.
    pub fn to_digital(&self, physical: f64) -> i32 {
        let (phys, dig) = self.span();
        let code = f64::from(self.digital_min) + (physical - self.physical_min) * dig / phys;
        code.round()
            .clamp(f64::from(self.digital_min), f64::from(self.digital_max)) as i32
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordHeader {
    pub patient_id: String,
    pub recording_id: String,
    pub start_time: NaiveDateTime,
    /// Raw 44-byte reserved field (`EDF+C` / `EDF+D` for EDF+ files).
    pub reserved: String,
    pub n_records: usize,
    pub record_duration_s: f64,
    pub signals: Vec<SignalHeader>,
}

impl RecordHeader {
    pub fn n_signals(&self) -> usize {
        self.signals.len()
    }

    pub fn duration_s(&self) -> f64 {
        self.n_records as f64 * self.record_duration_s
    }

    pub fn sampling_rate_hz(&self, signal: usize) -> f64 {
        self.signals[signal].samples_per_record as f64 / self.record_duration_s
    }

    fn record_samples(&self) -> usize {
        self.signals.iter().map(|s| s.samples_per_record).sum()
    }
}

/// A parsed EDF file: header plus one physical-unit series per signal.
#[derive(Debug, Clone, PartialEq)]
pub struct EdfRecord {
    pub header: RecordHeader,
    pub signals: Vec<SignalSeries>,
}

impl EdfRecord {
    /// Wraps equal-duration series into a record with a physical range
    /// fitted to each signal. Sampling rates must be whole numbers. Data
    /// records last 1 s when every signal fills whole seconds; otherwise the
    /// record holds as many samples of the first signal as divide both its
    /// length and its rate.
    pub fn from_signals(
        patient_id: &str,
        start_time: NaiveDateTime,
        signals: Vec<SignalSeries>,
    ) -> Result<Self> {
        let first = signals
            .first()
            .ok_or_else(|| Error::param("signals", "at least one signal is required"))?;
        let duration = first.duration_s();
        for s in &signals {
            if (s.fs - s.fs.round()).abs() > 1e-9 || s.fs < 1.0 {
                return Err(Error::param(
                    "fs",
                    format!("{}: {} Hz is not a whole number of samples per second", s.label, s.fs),
                ));
            }
            if s.is_empty() || (s.duration_s() - duration).abs() > 1e-9 {
                return Err(Error::Length(format!(
                    "{}: {} samples do not span the {duration} s of {}",
                    s.label,
                    s.len(),
                    first.label
                )));
            }
        }
        let whole_seconds = signals.iter().all(|s| s.len() % s.fs.round() as usize == 0);
        let n_records = if whole_seconds {
            first.len() / first.fs.round() as usize
        } else {
            let n = first.len() / gcd(first.len(), first.fs.round() as usize);
            if let Some(s) = signals.iter().find(|s| s.len() % n != 0) {
                return Err(Error::Length(format!(
                    "{}: {} samples do not split into {n} data records",
                    s.label,
                    s.len()
                )));
            }
            n
        };
        let record_duration_s = duration / n_records as f64;
        if number(record_duration_s, W_NUMBER)?.parse::<f64>() != Ok(record_duration_s) {
            return Err(Error::Length(format!(
                "no data record length of at most 8 characters divides {} samples",
                first.len()
            )));
        }
        let mut headers = Vec::with_capacity(signals.len());
        for s in &signals {
            let (lo, hi) = physical_range(&s.samples);
            headers.push(SignalHeader {
                label: s.label.clone(),
                transducer: String::new(),
                physical_dimension: "uV".into(),
                physical_min: lo,
                physical_max: hi,
                digital_min: -32768,
                digital_max: 32767,
                prefilter: s
                    .quality
                    .prefilter_band
                    .map(|(l, h)| format!("HP:{l}Hz LP:{h}Hz"))
                    .unwrap_or_default(),
                samples_per_record: s.len() / n_records,
            });
        }
        let header = RecordHeader {
            patient_id: patient_id.into(),
            recording_id: String::new(),
            start_time,
            reserved: String::new(),
            n_records,
            record_duration_s,
            signals: headers,
        };
        // Quantize through the digital codes so the in-memory record equals
        // what a reader of the serialized bytes would see.
        parse_edf(&write_edf(&header, &signals)?)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        write_edf(&self.header, &self.signals)
    }

    pub fn signal(&self, label: &str) -> Option<&SignalSeries> {
        self.signals.iter().find(|s| s.label == label)
    }
}

pub fn read_edf(path: impl AsRef<Path>) -> Result<EdfRecord> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_edf(&bytes)
}

struct Cursor<'a> {
    bytes: &'a [u8],
}

impl Cursor<'_> {
    fn field(&self, offset: usize, width: usize) -> Result<&str> {
        let raw = self.bytes.get(offset..offset + width).ok_or_else(|| Error::Header {
            offset: self.bytes.len(),
            message: format!("header ends before field at byte {offset}"),
        })?;
        if let Some(i) = raw.iter().position(|b| !(0x20..=0x7e).contains(b)) {
            return Err(Error::Header {
                offset: offset + i,
                message: "non-printable ASCII byte in header".into(),
            });
        }
        // Checked printable ASCII above, so this cannot fail.
        Ok(std::str::from_utf8(raw).unwrap_or_default().trim())
    }

    fn number<T: std::str::FromStr>(&self, offset: usize, width: usize, what: &str) -> Result<T> {
        let text = self.field(offset, width)?;
        text.parse().map_err(|_| Error::Header {
            offset,
            message: format!("{what}: cannot parse {text:?}"),
        })
    }
}

pub fn parse_edf(bytes: &[u8]) -> Result<EdfRecord> {
    let cur = Cursor { bytes };
    let version = cur.field(0, 8)?;
    if version != "0" {
        return Err(Error::Header {
            offset: 0,
            message: format!("unsupported version {version:?}"),
        });
    }
    let patient_id = cur.field(8, 80)?.to_string();
    let recording_id = cur.field(88, 80)?.to_string();
    let start_time = parse_start(&cur)?;
    let header_bytes: usize = cur.number(184, 8, "header size")?;
    let reserved = cur.field(192, 44)?.to_string();
    let n_records: i64 = cur.number(236, 8, "number of data records")?;
    let record_duration_s: f64 = cur.number(244, 8, "data record duration")?;
    let ns: usize = cur.number(252, 4, "number of signals")?;

    if ns == 0 {
        return Err(Error::Header {
            offset: 252,
            message: "record declares no signals".into(),
        });
    }
    if header_bytes != FIXED_HEADER * (ns + 1) {
        return Err(Error::Header {
            offset: 184,
            message: format!(
                "header size {header_bytes} disagrees with {ns} signals (expected {})",
                FIXED_HEADER * (ns + 1)
            ),
        });
    }
    if !(record_duration_s.is_finite() && record_duration_s > 0.0) {
        return Err(Error::Header {
            offset: 244,
            message: format!("data record duration must be positive, got {record_duration_s}"),
        });
    }
    if n_records == 0 || n_records < -1 {
        return Err(Error::Header {
            offset: 236,
            message: format!("invalid number of data records {n_records}"),
        });
    }

    let signals = parse_signal_headers(&cur, ns)?;
    let record_len = 2 * signals.iter().map(|s| s.samples_per_record).sum::<usize>();
    let available = bytes.len().saturating_sub(header_bytes) / record_len;
    let n_records = if n_records == -1 {
        if (bytes.len() - header_bytes) % record_len != 0 {
            return Err(Error::Truncated {
                complete: available,
                expected: available + 1,
            });
        }
        available
    } else {
        n_records as usize
    };
    if available < n_records {
        return Err(Error::Truncated {
            complete: available,
            expected: n_records,
        });
    }
    if available > n_records {
        log::warn!("ignoring {} trailing data record(s)", available - n_records);
    }

    let header = RecordHeader {
        patient_id,
        recording_id,
        start_time,
        reserved,
        n_records,
        record_duration_s,
        signals,
    };
    let data = &bytes[header_bytes..header_bytes + n_records * record_len];
    let series = decode_signals(&header, data, record_len)?;
    Ok(EdfRecord {
        header,
        signals: series,
    })
}

fn parse_start(cur: &Cursor) -> Result<NaiveDateTime> {
    let bad = |offset: usize, text: &str| Error::Header {
        offset,
        message: format!("malformed start date/time {text:?}"),
    };
    let date = cur.field(168, 8)?;
    let time = cur.field(176, 8)?;
    let d: Vec<u32> = date
        .split('.')
        .map(|p| p.parse().map_err(|_| bad(168, date)))
        .collect::<Result<_>>()?;
    let t: Vec<u32> = time
        .split('.')
        .map(|p| p.parse().map_err(|_| bad(176, time)))
        .collect::<Result<_>>()?;
    if d.len() != 3 || t.len() != 3 {
        return Err(bad(168, date));
    }
    // Two-digit years: 85..=99 are 19xx, the rest 20xx.
    let year = if d[2] >= 85 { 1900 + d[2] } else { 2000 + d[2] };
    NaiveDate::from_ymd_opt(year as i32, d[1], d[0])
        .ok_or_else(|| bad(168, date))?
        .and_hms_opt(t[0], t[1], t[2])
        .ok_or_else(|| bad(176, time))
}

fn parse_signal_headers(cur: &Cursor, ns: usize) -> Result<Vec<SignalHeader>> {
    let base = FIXED_HEADER;
    let off_label = base;
    let off_transducer = off_label + ns * W_LABEL;
    let off_dimension = off_transducer + ns * W_TRANSDUCER;
    let off_pmin = off_dimension + ns * W_DIMENSION;
    let off_pmax = off_pmin + ns * W_NUMBER;
    let off_dmin = off_pmax + ns * W_NUMBER;
    let off_dmax = off_dmin + ns * W_NUMBER;
    let off_prefilter = off_dmax + ns * W_NUMBER;
    let off_spr = off_prefilter + ns * W_PREFILTER;
    let off_reserved = off_spr + ns * W_NUMBER;
    // Make sure the whole block is present before reading individual fields.
    cur.field(off_reserved, ns * W_RESERVED)?;

    (0..ns)
        .map(|i| {
            let at = |off: usize, w: usize| off + i * w;
            let h = SignalHeader {
                label: cur.field(at(off_label, W_LABEL), W_LABEL)?.to_string(),
                transducer: cur.field(at(off_transducer, W_TRANSDUCER), W_TRANSDUCER)?.to_string(),
                physical_dimension: cur
                    .field(at(off_dimension, W_DIMENSION), W_DIMENSION)?
                    .to_string(),
                physical_min: cur.number(at(off_pmin, W_NUMBER), W_NUMBER, "physical minimum")?,
                physical_max: cur.number(at(off_pmax, W_NUMBER), W_NUMBER, "physical maximum")?,
                digital_min: cur.number(at(off_dmin, W_NUMBER), W_NUMBER, "digital minimum")?,
                digital_max: cur.number(at(off_dmax, W_NUMBER), W_NUMBER, "digital maximum")?,
                prefilter: cur.field(at(off_prefilter, W_PREFILTER), W_PREFILTER)?.to_string(),
                samples_per_record: cur.number(at(off_spr, W_NUMBER), W_NUMBER, "samples per record")?,
            };
            if h.digital_min >= h.digital_max
                || h.digital_min < i32::from(i16::MIN)
                || h.digital_max > i32::from(i16::MAX)
            {
                return Err(Error::Header {
                    offset: at(off_dmin, W_NUMBER),
                    message: format!(
                        "signal {}: digital range [{}, {}] is empty or exceeds 16 bits",
                        h.label, h.digital_min, h.digital_max
                    ),
                });
            }
            if !(h.physical_min < h.physical_max) {
                return Err(Error::Header {
                    offset: at(off_pmin, W_NUMBER),
                    message: format!(
                        "signal {}: physical minimum {} is not below maximum {}",
                        h.label, h.physical_min, h.physical_max
                    ),
                });
            }
            if h.samples_per_record == 0 {
                return Err(Error::Header {
                    offset: at(off_spr, W_NUMBER),
                    message: format!("signal {}: zero samples per record", h.label),
                });
            }
            Ok(h)
        })
        .collect()
}

fn decode_signals(header: &RecordHeader, data: &[u8], record_len: usize) -> Result<Vec<SignalSeries>> {
    let mut offsets = Vec::with_capacity(header.n_signals());
    let mut acc = 0;
    for s in &header.signals {
        offsets.push(acc);
        acc += 2 * s.samples_per_record;
    }

    header
        .signals
        .iter()
        .zip(offsets)
        .enumerate()
        .map(|(idx, (sh, start))| {
            let spr = sh.samples_per_record;
            let mut samples = Vec::with_capacity(spr * header.n_records);
            let mut seen = vec![0u64; 1024]; // bitmap over all 65536 codes
            let mut clamped = 0usize;
            for record in data.chunks_exact(record_len) {
                for pair in record[start..start + 2 * spr].chunks_exact(2) {
                    let mut code = i32::from(i16::from_le_bytes([pair[0], pair[1]]));
                    if code < sh.digital_min || code > sh.digital_max {
                        clamped += 1;
                        code = code.clamp(sh.digital_min, sh.digital_max);
                    }
                    let key = (code + 32768) as usize;
                    seen[key >> 6] |= 1 << (key & 63);
                    samples.push(sh.to_physical(code));
                }
            }
            let distinct = seen.iter().map(|w| w.count_ones() as usize).sum();
            let fs = header.sampling_rate_hz(idx);
            let mut series = SignalSeries::with_source(
                sh.label.clone(),
                fs,
                samples,
                SignalSource::RawChannel,
                Some(&sh.prefilter),
            )?;
            series.quality = QualityReport {
                clamped_samples: clamped,
                ..series.quality
            }
            .with_distinct_count(distinct);
            Ok(series)
        })
        .collect()
}

/// Serializes a header and matching physical series. Values are quantized
/// to the nearest digital code of each signal.
pub fn write_edf(header: &RecordHeader, signals: &[SignalSeries]) -> Result<Vec<u8>> {
    let ns = header.n_signals();
    if ns == 0 || signals.len() != ns {
        return Err(Error::Length(format!(
            "header declares {ns} signals, {} supplied",
            signals.len()
        )));
    }
    for (sh, s) in header.signals.iter().zip(signals) {
        if s.len() != sh.samples_per_record * header.n_records {
            return Err(Error::Length(format!(
                "signal {}: {} samples, header implies {}",
                sh.label,
                s.len(),
                sh.samples_per_record * header.n_records
            )));
        }
    }

    let header_bytes = FIXED_HEADER * (ns + 1);
    let mut out = Vec::with_capacity(header_bytes + 2 * header.record_samples() * header.n_records);
    let t = header.start_time;
    use chrono::{Datelike, Timelike};
    put(&mut out, "0", 8)?;
    put(&mut out, &header.patient_id, 80)?;
    put(&mut out, &header.recording_id, 80)?;
    put(
        &mut out,
        &format!("{:02}.{:02}.{:02}", t.day(), t.month(), t.year() % 100),
        8,
    )?;
    put(
        &mut out,
        &format!("{:02}.{:02}.{:02}", t.hour(), t.minute(), t.second()),
        8,
    )?;
    put(&mut out, &header_bytes.to_string(), 8)?;
    put(&mut out, &header.reserved, 44)?;
    put(&mut out, &header.n_records.to_string(), 8)?;
    put(&mut out, &number(header.record_duration_s, 8)?, 8)?;
    put(&mut out, &ns.to_string(), 4)?;

    let sh = &header.signals;
    for s in sh {
        put(&mut out, &s.label, W_LABEL)?;
    }
    for s in sh {
        put(&mut out, &s.transducer, W_TRANSDUCER)?;
    }
    for s in sh {
        put(&mut out, &s.physical_dimension, W_DIMENSION)?;
    }
    for s in sh {
        put(&mut out, &number(s.physical_min, W_NUMBER)?, W_NUMBER)?;
    }
    for s in sh {
        put(&mut out, &number(s.physical_max, W_NUMBER)?, W_NUMBER)?;
    }
    for s in sh {
        put(&mut out, &s.digital_min.to_string(), W_NUMBER)?;
    }
    for s in sh {
        put(&mut out, &s.digital_max.to_string(), W_NUMBER)?;
    }
    for s in sh {
        put(&mut out, &s.prefilter, W_PREFILTER)?;
    }
    for s in sh {
        put(&mut out, &s.samples_per_record.to_string(), W_NUMBER)?;
    }
    for _ in sh {
        put(&mut out, "", W_RESERVED)?;
    }
    debug_assert_eq!(out.len(), header_bytes);

    for r in 0..header.n_records {
        for (h, s) in sh.iter().zip(signals) {
            let spr = h.samples_per_record;
            for &v in &s.samples[r * spr..(r + 1) * spr] {
                out.extend_from_slice(&(h.to_digital(v) as i16).to_le_bytes());
            }
        }
    }
    Ok(out)
}

fn put(out: &mut Vec<u8>, text: &str, width: usize) -> Result<()> {
    if !text.bytes().all(|b| (0x20..=0x7e).contains(&b)) || text.len() > width {
        return Err(Error::param(
            "header",
            format!("{text:?} is not printable ASCII of at most {width} bytes"),
        ));
    }
    out.extend_from_slice(text.as_bytes());
    out.resize(out.len() + width - text.len(), b' ');
    Ok(())
}

/// Shortest decimal rendering of `v` that fits in `width` characters.
fn number(v: f64, width: usize) -> Result<String> {
    let plain = format!("{v}");
    if plain.len() <= width {
        return Ok(plain);
    }
    for prec in (0..width).rev() {
        let s = format!("{v:.prec$}");
        if s.len() <= width {
            return Ok(s);
        }
    }
    Err(Error::param("header", format!("{v} does not fit in {width} characters")))
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Physical range covering `samples` whose bounds survive 8-character
/// rendering unchanged.
fn physical_range(samples: &[f64]) -> (f64, f64) {
    let (mut lo, mut hi) = samples
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        return (-1.0, 1.0);
    }
    if lo == hi {
        lo -= 1.0;
        hi += 1.0;
    }
    let outward = |v: f64, up: bool| {
        for digits in (0..=6).rev() {
            let scale = 10f64.powi(digits);
            let r = if up { (v * scale).ceil() / scale } else { (v * scale).floor() / scale };
            if let Ok(s) = number(r, W_NUMBER) {
                if s.parse::<f64>() == Ok(r) {
                    return r;
                }
            }
        }
        if up { v.ceil() } else { v.floor() }
    };
    (outward(lo, false), outward(hi, true))
}
