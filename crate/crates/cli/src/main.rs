//! `contimo`: train a continuous motion model and query it.

mod config;
mod task;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use contimo::metrics::{report_csv, report_table};
use contimo::motion::{load_sequence, write_bvh, FeatureLayout};
use contimo::tasks::{evaluate, extrapolate, extrapolation_count, inbetween, interpolate, load_dataset};
use contimo::training::train;
use contimo::{Error, Model, MotionSequence, Result, Skeleton, TrainState};
use log::{info, warn};

use crate::config::CliConfig;
use crate::task::{parse_pair, Mode, TaskSpec};

/// Worker threads for evaluation; defaults to all cores.
const THREADS_ENV: &str = "CONTIMO_THREADS";

#[derive(Parser)]
#[command(name = "contimo", version, about = "Continuous implicit representation of motion sequences")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML config with [model], [train], [loss] and [task] tables.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Args)]
struct Output {
    /// Output file.
    #[arg(long)]
    out: PathBuf,
    /// Output format; inferred from the extension of --out when omitted.
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Frame rate written with the output.
    #[arg(long)]
    fps: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, ValueEnum)]
enum Format {
    Bvh,
    Bin,
    Csv,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a model to a sequence file or a directory of them.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        /// Where the trained model is written.
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        epochs: Option<usize>,
        /// Per-epoch loss history as CSV.
        #[arg(long)]
        history: Option<PathBuf>,
    },
    /// Resample a sequence by any positive scale.
    Interpolate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        scale: Option<f64>,
        #[command(flatten)]
        output: Output,
    },
    /// Fill a gap of frames from the context around it.
    Inbetween {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        input: PathBuf,
        /// First hidden frame and gap length.
        #[arg(long, value_name = "START,LEN", value_parser = parse_pair::<usize>)]
        gap: Option<(usize, usize)>,
        #[command(flatten)]
        output: Output,
    },
    /// Query normalized times, possibly outside [0, 1].
    Extrapolate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_name = "TMIN,TMAX", value_parser = parse_pair::<f64>, allow_hyphen_values = true)]
        range: Option<(f64, f64)>,
        /// Number of output frames; defaults to the input's frame spacing.
        #[arg(long)]
        count: Option<usize>,
        #[command(flatten)]
        output: Output,
    },
    /// Degrade every sequence of a dataset, reconstruct it and report metrics.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Comma-separated degradation factors.
        #[arg(long, value_delimiter = ',')]
        scales: Option<Vec<f64>>,
        /// Dataset name in the report; defaults to the path's file name.
        #[arg(long)]
        name: Option<String>,
        /// Report CSV; the table always goes to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config(_) => 2,
        Error::Parse { .. } | Error::Format(_) | Error::Io(_) | Error::InvalidArgument(_) | Error::Shape { .. } => 3,
        Error::Numeric(_) | Error::NonFinite { .. } => 4,
        Error::NotScalar { .. } | Error::NonDifferentiable { .. } | Error::MissingInput(_) => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(exit_code(&e));
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn configure_threads() -> Result<()> {
    let Ok(value) = std::env::var(THREADS_ENV) else { return Ok(()) };
    let threads: usize = value
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::Config(format!("{THREADS_ENV} must be a positive integer, got `{value}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| Error::Config(e.to_string()))
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Train { common, data, checkpoint, epochs, history } => {
            let mut cfg = CliConfig::load(common.config.as_deref())?.run;
            if let Some(seed) = common.seed {
                cfg.model.seed = seed;
                cfg.train.seed = seed;
            }
            if let Some(e) = epochs {
                cfg.train.epochs = e;
            }
            cfg.validate()?;
            let pool: Vec<MotionSequence> = load_samples(&data)?.into_iter().map(|s| s.sequence).collect();
            let dim = pool[0].dim();
            info!("training on {} sequences of width {dim}", pool.len());
            let mut state = TrainState::new(Model::new(cfg.model.clone(), dim)?, &cfg.train);
            let log = train(&pool, &mut state, &cfg.train, &cfg.loss, Some(&checkpoint))?;
            state.model.save(&checkpoint)?;
            if let Some(last) = log.records.last() {
                info!("finished epoch {}: mse {:.6e}, velocity {:.6e}", last.epoch, last.mse, last.velocity);
            }
            if let Some(path) = history {
                std::fs::write(path, log.to_csv())?;
            }
            info!("wrote {}", checkpoint.display());
            Ok(())
        }
        Command::Interpolate { common, checkpoint, input, scale, output } => {
            let cfg = CliConfig::load(common.config.as_deref())?;
            let spec = TaskSpec::interpolate(&cfg.task, scale, output.fps)?;
            run_task(&checkpoint, &input, &spec, &output)
        }
        Command::Inbetween { common, checkpoint, input, gap, output } => {
            let cfg = CliConfig::load(common.config.as_deref())?;
            let spec = TaskSpec::inbetween(&cfg.task, gap, output.fps)?;
            run_task(&checkpoint, &input, &spec, &output)
        }
        Command::Extrapolate { common, checkpoint, input, range, count, output } => {
            let cfg = CliConfig::load(common.config.as_deref())?;
            let spec = TaskSpec::extrapolate(&cfg.task, range, count, output.fps)?;
            run_task(&checkpoint, &input, &spec, &output)
        }
        Command::Evaluate { common, checkpoint, data, scales, name, out } => {
            let cfg = CliConfig::load(common.config.as_deref())?;
            let scales = scales.or(cfg.task.scales).unwrap_or_else(|| vec![2.0]);
            if let Some(bad) = scales.iter().find(|s| !(**s >= 1.0 && s.is_finite())) {
                return Err(Error::Config(format!("degradation factors must be >= 1, got {bad}")));
            }
            let model = Model::load(&checkpoint)?;
            let samples = load_samples(&data)?;
            let name = name.unwrap_or_else(|| {
                data.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "dataset".into())
            });
            let rows = evaluate(&model, &name, &samples, &scales)?;
            print!("{}", report_table(&rows));
            if let Some(path) = out {
                std::fs::write(path, report_csv(&rows))?;
            }
            Ok(())
        }
    }
}

/// Loads a dataset, warning about unreadable files; fails if none load.
fn load_samples(path: &Path) -> Result<Vec<contimo::tasks::Sample>> {
    let (samples, skipped) = load_dataset(path)?;
    for (file, err) in &skipped {
        warn!("skipping {}: {err}", file.display());
    }
    if samples.is_empty() {
        return Err(Error::Format(format!("no readable sequences in {}", path.display())));
    }
    Ok(samples)
}

fn run_task(checkpoint: &Path, input: &Path, spec: &TaskSpec, output: &Output) -> Result<()> {
    let model = Model::load(checkpoint)?;
    let (seq, skeleton) = load_sequence(input)?;
    let mut result = match &spec.mode {
        Mode::Interpolate { scale } => interpolate(&model, &seq, *scale)?,
        Mode::Inbetween { gap } => inbetween(&model, &seq, *gap)?,
        Mode::Extrapolate { tmin, tmax, count } => {
            let count = count.unwrap_or_else(|| extrapolation_count(seq.len(), *tmin, *tmax).max(2));
            extrapolate(&model, &seq, *tmin, *tmax, count)?
        }
    };
    if let Some(fps) = spec.fps {
        result = MotionSequence::new(result.frames().clone(), fps, result.layout())?;
    }
    write_output(&result, skeleton.as_ref(), output)?;
    info!("wrote {} frames to {}", result.len(), output.out.display());
    Ok(())
}

fn format_for(output: &Output) -> Format {
    output.format.unwrap_or_else(|| match output.out.extension().and_then(|e| e.to_str()) {
        Some(e) if e.eq_ignore_ascii_case("bvh") => Format::Bvh,
        Some(e) if e.eq_ignore_ascii_case("csv") => Format::Csv,
        _ => Format::Bin,
    })
}

fn write_output(seq: &MotionSequence, skeleton: Option<&Skeleton>, output: &Output) -> Result<()> {
    match format_for(output) {
        Format::Bin => seq.save(&output.out),
        Format::Csv => Ok(std::fs::write(&output.out, seq.to_csv())?),
        Format::Bvh => {
            let skeleton = match (skeleton, seq.layout()) {
                (Some(sk), FeatureLayout::BvhChannels { .. }) => sk,
                _ => return Err(Error::Config("BVH output needs a BVH input".into())),
            };
            Ok(std::fs::write(&output.out, write_bvh(skeleton, seq)?)?)
        }
    }
}
