use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;
use turnscope::hypnogram::{ExportFormat, DEFAULT_MA_LENGTH};
use turnscope::{
    ChannelSpec, SegmentParams, StageThresholds, SyncInput, SynthSpec, TauParams, TiePolicy,
    TurningParams,
};

use crate::failure::{CliResult, Failure};

#[derive(Debug, Parser)]
#[command(name = "turnscope", version, about = "Continuous hypnograms from EEG turning points")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Turning-point delay in samples.
    #[arg(long, global = true)]
    pub d: Option<usize>,

    /// Epoch length in seconds.
    #[arg(long, global = true, value_name = "SECONDS")]
    pub epoch: Option<f64>,

    /// Moving-average length in epochs (odd).
    #[arg(long, global = true, value_name = "EPOCHS")]
    pub ma: Option<usize>,

    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,

    /// Output formats, comma separated: csv, json, svg.
    #[arg(long, global = true, value_delimiter = ',')]
    pub format: Vec<String>,

    /// TOML run configuration; flags override its values.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Seed for dithering and synthetic signals.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write continuous hypnograms of EDF records.
    Hypnogram(RecordArgs),
    /// Detect tau waves and channel synchrony.
    Tau(TauArgs),
    /// Heuristic 30 s staging and block segmentation.
    Stage(StageArgs),
    /// Agreement between heuristic and expert stages.
    Compare(CompareArgs),
    /// Generate a synthetic fixture EDF.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct RecordArgs {
    /// EDF records, or hypnogram CSVs for tau and stage.
    pub inputs: Vec<PathBuf>,

    /// Channel label or bipolar pair such as Fp2-F4; repeatable.
    #[arg(long = "channel", short = 'c')]
    pub channels: Vec<String>,
}

#[derive(Debug, Args)]
pub struct TauArgs {
    #[command(flatten)]
    pub record: RecordArgs,

    #[arg(long)]
    pub min_amplitude: Option<f64>,

    /// Correlate raw smoothed rates instead of detrended ones.
    #[arg(long)]
    pub raw_sync: bool,
}

#[derive(Debug, Args)]
pub struct StageArgs {
    #[command(flatten)]
    pub record: RecordArgs,

    #[arg(long)]
    pub frontal: Option<String>,

    #[arg(long)]
    pub parietal: Option<String>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// Stage CSV from `stage`, or annotation text.
    pub heuristic: PathBuf,
    /// Expert annotation text.
    pub expert: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SynthKindArg {
    WhiteNoise,
    Sine,
    Ar1,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, value_enum)]
    pub kind: Option<SynthKindArg>,

    /// Number of samples; overrides the duration.
    #[arg(long)]
    pub samples: Option<usize>,

    #[arg(long, value_name = "SECONDS")]
    pub duration: Option<f64>,

    #[arg(long, default_value_t = 512.0)]
    pub fs: f64,

    #[arg(long, default_value_t = 2.0)]
    pub frequency: f64,

    #[arg(long, default_value_t = 1.0)]
    pub amplitude: f64,

    #[arg(long, default_value_t = 0.5)]
    pub phi: f64,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyncConfig {
    pub window_s: f64,
    pub step_s: f64,
    pub input: SyncInput,
}

impl Default for SyncConfig {
    fn default() -> Self {
        SyncConfig {
            window_s: 300.0,
            step_s: 30.0,
            input: SyncInput::Detrended,
        }
    }
}

/// Contents of a `--config` file. Relative paths are taken relative to the
/// file's directory.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub inputs: Vec<PathBuf>,
    pub channels: Vec<ChannelSpec>,
    pub d: Option<usize>,
    pub tie_policy: Option<TiePolicy>,
    pub dither_amplitude: Option<f64>,
    pub seed: Option<u64>,
    pub epoch_len_s: Option<f64>,
    pub ma_length: Option<usize>,
    pub frontal: Option<String>,
    pub parietal: Option<String>,
    pub out_dir: Option<PathBuf>,
    pub formats: Vec<String>,
    pub thresholds: StageThresholds,
    pub tau: TauParams,
    pub segment: SegmentParams,
    pub synchrony: SyncConfig,
    pub synth: Option<SynthSpec>,
}

impl RunConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Failure::io(path, e))?;
        let mut cfg: RunConfig = toml::from_str(&text)
            .map_err(|e| Failure::config(format!("{}: {}", path.display(), e.message())).at(path))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in cfg.inputs.iter_mut().chain(cfg.out_dir.iter_mut()) {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }
}

/// Effective settings after merging the config file and flags.
#[derive(Debug)]
pub struct Settings {
    pub turning: TurningParams,
    pub epoch_len_s: f64,
    pub ma_length: usize,
    pub out_dir: PathBuf,
    pub formats: Vec<ExportFormat>,
    pub channels: Vec<ChannelSpec>,
    pub inputs: Vec<PathBuf>,
    pub frontal: Option<String>,
    pub parietal: Option<String>,
    pub thresholds: StageThresholds,
    pub tau: TauParams,
    pub segment: SegmentParams,
    pub synchrony: SyncConfig,
    pub synth: Option<SynthSpec>,
    pub seed: Option<u64>,
}

impl Settings {
    pub fn wants(&self, f: ExportFormat) -> bool {
        self.formats.contains(&f)
    }
}

pub fn settings(cli: &Cli) -> CliResult<Settings> {
    let cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let defaults = TurningParams::default();
    let seed = cli.seed.or(cfg.seed);
    let turning = TurningParams {
        delay: cli.d.or(cfg.d).unwrap_or(defaults.delay),
        tie_policy: cfg.tie_policy.unwrap_or(defaults.tie_policy),
        dither_amplitude: cfg.dither_amplitude.unwrap_or(defaults.dither_amplitude),
        seed: seed.unwrap_or(defaults.seed),
    };
    turning.validate()?;

    let epoch_len_s = cli.epoch.or(cfg.epoch_len_s).unwrap_or(1.0);
    if !(epoch_len_s.is_finite() && epoch_len_s > 0.0) {
        return Err(Failure {
            field: Some("epoch_len_s".into()),
            ..Failure::config(format!("epoch length must be positive, got {epoch_len_s}"))
        });
    }
    let ma_length = cli.ma.or(cfg.ma_length).unwrap_or(DEFAULT_MA_LENGTH);
    if ma_length == 0 || ma_length % 2 == 0 {
        return Err(Failure {
            field: Some("ma_length".into()),
            ..Failure::config(format!("moving-average length must be odd, got {ma_length}"))
        });
    }
    cfg.thresholds.validate()?;
    cfg.tau.validate()?;
    cfg.segment.validate()?;
    if !(cfg.synchrony.window_s > 0.0 && cfg.synchrony.step_s > 0.0) {
        return Err(Failure::config("synchrony window and step must be positive"));
    }

    let names = if cli.format.is_empty() { &cfg.formats } else { &cli.format };
    let formats = if names.is_empty() {
        vec![ExportFormat::Csv, ExportFormat::Json, ExportFormat::Svg]
    } else {
        names
            .iter()
            .map(|s| s.parse::<ExportFormat>())
            .collect::<Result<Vec<_>, _>>()?
    };

    let (inputs, channels, frontal, parietal) = match &cli.command {
        Command::Hypnogram(r) => (&r.inputs, &r.channels, None, None),
        Command::Tau(t) => (&t.record.inputs, &t.record.channels, None, None),
        Command::Stage(s) => (
            &s.record.inputs,
            &s.record.channels,
            s.frontal.clone(),
            s.parietal.clone(),
        ),
        Command::Compare(_) | Command::Synth(_) => (&Vec::new(), &Vec::new(), None, None),
    };
    let mut tau = cfg.tau;
    let mut synchrony = cfg.synchrony;
    if let Command::Tau(t) = &cli.command {
        if let Some(a) = t.min_amplitude {
            tau.min_amplitude = a;
            tau.validate()?;
        }
        if t.raw_sync {
            synchrony.input = SyncInput::Raw;
        }
    }

    Ok(Settings {
        turning,
        epoch_len_s,
        ma_length,
        out_dir: cli.out.clone().or(cfg.out_dir).unwrap_or_else(|| PathBuf::from(".")),
        formats,
        channels: if channels.is_empty() {
            cfg.channels
        } else {
            channels
                .iter()
                .map(|c| c.parse())
                .collect::<Result<Vec<ChannelSpec>, _>>()?
        },
        inputs: if inputs.is_empty() { cfg.inputs } else { inputs.clone() },
        frontal: frontal.or(cfg.frontal),
        parietal: parietal.or(cfg.parietal),
        thresholds: cfg.thresholds,
        tau,
        segment: cfg.segment,
        synchrony,
        synth: cfg.synth,
        seed,
    })
}
