//! Turning-rate analysis of long EEG records.
//!
//! The pipeline counts local maxima and minima of each channel at a fixed
//! delay, in 1-second epochs, and smooths the per-epoch rates into a
//! continuous hypnogram:
//!
//! ```text
//! EDF bytes ─ ingest::parse_edf ─▶ SignalSeries (per channel, µV)
//!           ─ turning::epoch_rates ─▶ EpochSeries (1 s rates, T' counts)
//!           ─ hypnogram::moving_average ─▶ ContinuousHypnogram (MA(31))
//!           ├─ tau::detect_tau / tau::synchrony   infra-slow waves
//!           └─ staging::classify_epochs / segment_blocks / compare_annotations
//! ```
//!
//! `synth` provides seeded generators whose turning statistics are known in
//! closed form, e.g. iid noise turns with probability 2/3 at any delay.

pub mod error;
pub mod hypnogram;
pub mod ingest;
pub mod staging;
pub mod synth;
pub mod tau;
pub mod turning;

pub use error::{Error, Result};
pub use hypnogram::{build_hypnogram, moving_average, ChannelSpec, ContinuousHypnogram};
pub use ingest::{
    derive_bipolar, parse_annotations, parse_edf, read_edf, AnnotationSeries, EdfRecord,
    QualityReport, RecordHeader, SignalSeries, SignalSource, Stage,
};
pub use staging::{
    classify_epochs, compare_annotations, segment_blocks, AgreementReport, Block, BlockKind,
    HeuristicStage, SegmentParams, StageThresholds, StagedEpochs,
};
pub use synth::{generate, SynthKind, SynthSpec};
pub use tau::{detect_tau, synchrony, SyncInput, SynchronySeries, TauEvent, TauParams};
pub use turning::{
    classify_point, dither_series, epoch_rates, turning_rate_window, EpochSeries, TiePolicy,
    TurnKind, TurningParams,
};
