//! Shared fixtures for the benchmarks.

use turnscope::{generate, EdfRecord, SignalSeries, SynthKind, SynthSpec};

pub const FS: f64 = 512.0;

/// Seeded white noise at `FS`.
pub fn noise(label: &str, duration_s: f64, seed: u64) -> SignalSeries {
    let mut x = generate(&SynthSpec {
        kind: SynthKind::WhiteNoise { amplitude: 50.0 },
        fs: FS,
        duration_s,
        seed,
    })
    .expect("valid spec");
    x.label = label.into();
    x
}

/// Serialized two-channel record.
pub fn record_bytes(duration_s: f64) -> Vec<u8> {
    let rec = EdfRecord::from_signals(
        "bench",
        Default::default(),
        vec![noise("Fp2-F4", duration_s, 1), noise("C4-P4", duration_s, 2)],
    )
    .expect("valid record");
    rec.to_bytes().expect("encodable")
}
