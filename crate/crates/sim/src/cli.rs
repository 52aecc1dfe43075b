//! `aeqsim run | sweep | genmodel`.
//!
//! Exit codes: 0 success, 1 verification mismatch or failed sweep check,
//! 2 usage or I/O error, 3 invalid model.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::ops::RangeInclusive;
use std::path::{Path, PathBuf};

use aeqsim_core::conv::PipelineMode;
use aeqsim_core::scheduler::{run_network_with, RunPlan, RunTracer, Sequential, SimError, UnitExecutor, ALLOWED_PARALLELISM};
use aeqsim_core::{dense_run, Frame, NetworkSpec, Width};
use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::images::load_images;
use crate::model_io::{load_model, save_model, ModelFileError};
use crate::random::{random_frame, random_model, RandomConfig};
use crate::report::{Format, ImageReport, RunReport};
use crate::sweep::{sweep, DEFAULT_SCALES};
use crate::threaded::Threaded;
use crate::trace::WriteTracer;
use crate::verify::compare_runs;

pub const EXIT_OK: u8 = 0;
pub const EXIT_MISMATCH: u8 = 1;
pub const EXIT_USAGE: u8 = 2;
pub const EXIT_MODEL: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "aeqsim", version, about = "Cycle-level simulator for an event-driven CSNN accelerator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Classify images and report cycle statistics.
    Run(RunArgs),
    /// Sweep parallelism and encoder threshold scaling.
    Sweep(SweepArgs),
    /// Write a seeded random model.
    Genmodel(GenArgs),
}

#[derive(Debug, Args)]
struct InputArgs {
    /// Model file.
    #[arg(short, long)]
    model: PathBuf,
    /// IDX or PGM images.
    #[arg(short, long, conflicts_with = "random_frames")]
    input: Option<PathBuf>,
    /// Use N seeded random frames instead of an input file.
    #[arg(long, value_name = "N")]
    random_frames: Option<usize>,
    /// Seed for random frames.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Process at most N images.
    #[arg(long, value_name = "N")]
    limit: Option<usize>,
    /// Worker threads for unit execution; 1 is fully sequential.
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[command(flatten)]
    io: InputArgs,
    /// Also run the dense reference and fail on any difference.
    #[arg(long)]
    verify: bool,
    /// Convolution units per layer (1, 2, 4, 8 or 16).
    #[arg(long, default_value_t = 1)]
    parallel: usize,
    /// Clock in MHz for frame-rate estimates.
    #[arg(long, value_name = "MHZ")]
    clock: Option<f64>,
    /// Write per-cycle pipeline traces here.
    #[arg(long, value_name = "PATH")]
    trace: Option<PathBuf>,
    /// Write every address event queue here.
    #[arg(long, value_name = "PATH")]
    dump_aeq: Option<PathBuf>,
    /// Disable hazard detection (results may differ from the reference).
    #[arg(long)]
    unprotected: bool,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    io: InputArgs,
    /// Comma-separated parallelism factors.
    #[arg(long, value_delimiter = ',', default_values_t = ALLOWED_PARALLELISM)]
    parallel: Vec<usize>,
    /// Comma-separated encoder threshold scale factors.
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_SCALES)]
    scales: Vec<f64>,
}

#[derive(Debug, Args)]
struct GenArgs {
    /// Topology, e.g. 28x28-8C3-P3-4C3-F10.
    #[arg(long)]
    shape: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Fixed-point width in bits (8 or 16).
    #[arg(long, default_value_t = 8)]
    width: u32,
    #[arg(long, default_value_t = 4)]
    timesteps: usize,
    /// Largest input pixel value the encoder thresholds span.
    #[arg(long, default_value_t = 255)]
    max_pixel: u16,
    /// Kernel weight range `lo:hi`.
    #[arg(long, allow_hyphen_values = true)]
    weights: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    bias: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    threshold: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    classifier: Option<String>,
    #[arg(short, long)]
    out: PathBuf,
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Failure {
        Failure { code: EXIT_USAGE, message: message.into() }
    }
}

impl From<ModelFileError> for Failure {
    fn from(e: ModelFileError) -> Failure {
        let code = if e.is_io() { EXIT_USAGE } else { EXIT_MODEL };
        Failure { code, message: e.to_string() }
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Failure {
        let code = match e {
            SimError::Parallelism(_) => EXIT_USAGE,
            SimError::Model(aeqsim_core::ModelError::FrameShape { .. }) => EXIT_USAGE,
            _ => EXIT_MODEL,
        };
        Failure { code, message: e.to_string() }
    }
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure::usage(format!("{}: {e}", path.display()))
}

/// Runs the CLI on `args` (including the program name).
pub fn main_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() { write!(err, "{text}") } else { write!(out, "{text}") };
            return code;
        }
    };
    let result = match cli.command {
        Command::Run(a) => cmd_run(&a, out, err),
        Command::Sweep(a) => cmd_sweep(&a, out),
        Command::Genmodel(a) => cmd_genmodel(&a, out),
    };
    match result {
        Ok(code) => code,
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.message);
            f.code
        }
    }
}

fn load_frames(io: &InputArgs, net: &NetworkSpec) -> Result<Vec<Frame>, Failure> {
    let mut frames: Vec<Frame> = match (&io.input, io.random_frames) {
        (Some(path), _) => {
            let set = load_images(path).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
            let take = io.limit.unwrap_or(usize::MAX).min(set.len());
            (0..take).map(|k| set.frame(k)).collect()
        }
        (None, Some(n)) => {
            let mut rng = ChaCha8Rng::seed_from_u64(io.seed);
            let max = net.schedule.thresholds().last().map_or(255, |&m| m.saturating_add(1).max(255));
            (0..n).map(|_| random_frame(&mut rng, net, max, 0.3)).collect()
        }
        (None, None) => return Err(Failure::usage("need --input or --random-frames")),
    };
    if let Some(limit) = io.limit {
        frames.truncate(limit);
    }
    Ok(frames)
}

fn executor(threads: Option<usize>) -> Box<dyn UnitExecutor> {
    match threads {
        Some(1) => Box::new(Sequential),
        Some(n) => Box::new(Threaded::new(n)),
        None => Box::new(Threaded::available()),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path).map(BufWriter::new).map_err(|e| io_failure(path, e))
}

fn cmd_run(a: &RunArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<u8, Failure> {
    let net = load_model(&a.io.model)?;
    let frames = load_frames(&a.io, &net)?;
    let mut plan = RunPlan::new(a.parallel)?;
    plan.clock_mhz = a.clock;
    if a.unprotected {
        plan = plan.with_mode(PipelineMode::Unprotected);
    }
    let exec = executor(a.io.threads);
    let mut tracer = a.trace.as_deref().map(create).transpose()?.map(WriteTracer::new);
    let mut dump = a.dump_aeq.as_deref().map(create).transpose()?;

    let mut images = Vec::with_capacity(frames.len());
    for (index, frame) in frames.iter().enumerate() {
        if let Some(t) = tracer.as_mut() {
            t.line(&format!("# image={index}"));
        }
        let run = run_network_with(&net, frame, &plan, exec.as_ref(), tracer.as_mut().map(|t| t as &mut dyn RunTracer))?;
        if a.verify {
            let dense = dense_run(&net, frame).map_err(SimError::from)?;
            if let Err(m) = compare_runs(&dense, &run) {
                let _ = writeln!(err, "mismatch: image {index}: {m}");
                return Ok(EXIT_MISMATCH);
            }
        }
        if let (Some(d), Some(path)) = (dump.as_mut(), a.dump_aeq.as_deref()) {
            let mut s = String::new();
            let stores = std::iter::once(("input".to_string(), &run.input))
                .chain(run.outputs.iter().enumerate().map(|(l, st)| (format!("layer{l}"), st)));
            for (name, store) in stores {
                s.push_str(&format!("# image={index} {name}\n"));
                store.dump(&mut s).expect("string formatting");
            }
            d.write_all(s.as_bytes()).map_err(|e| io_failure(path, e))?;
        }
        images.push(ImageReport { index, label: run.label, class_potentials: run.class_potentials, stats: run.stats });
    }
    if let (Some(t), Some(path)) = (tracer, a.trace.as_deref()) {
        t.finish().map_err(|e| io_failure(path, e))?;
    }
    if let (Some(mut d), Some(path)) = (dump, a.dump_aeq.as_deref()) {
        d.flush().map_err(|e| io_failure(path, e))?;
    }

    let report = RunReport::new(&net, plan.parallelism(), plan.clock_mhz, images);
    let text = report.render(a.io.format);
    out.write_all(text.as_bytes()).map_err(|e| Failure::usage(e.to_string()))?;
    if a.verify {
        let msg = format!("verified: {} layers × {} steps equal", net.layers.len(), net.timesteps());
        let _ = match a.io.format {
            Format::Text => writeln!(out, "{msg}"),
            Format::Json => writeln!(err, "{msg}"),
        };
    }
    Ok(EXIT_OK)
}

fn cmd_sweep(a: &SweepArgs, out: &mut dyn Write) -> Result<u8, Failure> {
    let net = load_model(&a.io.model)?;
    let frames = load_frames(&a.io, &net)?;
    let exec = executor(a.io.threads);
    let rep = sweep(&net, &frames, &a.parallel, &a.scales, exec.as_ref())?;
    let text = match a.io.format {
        Format::Text => rep.to_text(),
        Format::Json => serde_json::to_string_pretty(&rep).expect("serializable") + "\n",
    };
    out.write_all(text.as_bytes()).map_err(|e| Failure::usage(e.to_string()))?;
    let ok = rep.makespan_non_increasing && rep.cycles_monotone_in_events;
    Ok(if ok { EXIT_OK } else { EXIT_MISMATCH })
}

fn parse_range(s: Option<&str>, default: RangeInclusive<i16>) -> Result<RangeInclusive<i16>, Failure> {
    let Some(s) = s else { return Ok(default) };
    let bad = || Failure::usage(format!("range `{s}` must be lo:hi with lo <= hi"));
    let (lo, hi) = s.split_once(':').ok_or_else(bad)?;
    let (lo, hi): (i16, i16) = (lo.trim().parse().map_err(|_| bad())?, hi.trim().parse().map_err(|_| bad())?);
    if lo > hi {
        return Err(bad());
    }
    Ok(lo..=hi)
}

fn cmd_genmodel(a: &GenArgs, out: &mut dyn Write) -> Result<u8, Failure> {
    let width = Width::from_bits(a.width).ok_or_else(|| Failure::usage(format!("width must be 8 or 16, got {}", a.width)))?;
    let d = RandomConfig::default();
    let cfg = RandomConfig {
        width,
        timesteps: a.timesteps,
        max_pixel: a.max_pixel,
        weights: parse_range(a.weights.as_deref(), d.weights)?,
        bias: parse_range(a.bias.as_deref(), d.bias)?,
        threshold: parse_range(a.threshold.as_deref(), d.threshold)?,
        classifier_weights: parse_range(a.classifier.as_deref(), d.classifier_weights)?,
    };
    let net = random_model(a.seed, &a.shape, &cfg).map_err(|e| Failure::usage(e.to_string()))?;
    save_model(&net, &a.out)?;
    let _ = writeln!(out, "wrote {} ({} layers, T={})", a.out.display(), net.layers.len(), net.timesteps());
    Ok(EXIT_OK)
}
