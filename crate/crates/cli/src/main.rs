//! `diffdc`: masks, simulated acquisitions, training, reconstruction and
//! evaluation from the command line.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use diffdc_core::masks::MaskPattern;

use crate::config::RunConfig;
use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "diffdc",
    version,
    about = "Diffusion MRI reconstruction with data consistency"
)]
struct Cli {
    /// TOML run configuration; flags override its keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a k-space sampling mask.
    Mask(MaskArgs),
    /// Simulate undersampled acquisitions of phantoms or given images.
    Simulate(SimulateArgs),
    /// Train the noise predictor on a simulated dataset.
    Train(TrainArgs),
    /// Reconstruct images from k-space measurements.
    Reconstruct(ReconstructArgs),
    /// Compare reconstructions against ground truth.
    Evaluate(EvaluateArgs),
}

#[derive(Debug, Args)]
struct MaskFlags {
    #[arg(long)]
    pattern: Option<MaskPattern>,
    #[arg(long = "accel")]
    acceleration: Option<f64>,
    /// Center-block fraction of the phase-encode width.
    #[arg(long)]
    center_fraction: Option<f64>,
}

#[derive(Debug, Args)]
struct MaskArgs {
    #[command(flatten)]
    mask: MaskFlags,
    /// Square grid size; overridden by --height/--width.
    #[arg(long)]
    size: Option<usize>,
    #[arg(long)]
    height: Option<usize>,
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output mask tensor.
    #[arg(long)]
    out: PathBuf,
    /// Also write a greymap preview.
    #[arg(long)]
    pgm: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[command(flatten)]
    mask: MaskFlags,
    /// Number of phantoms (ignored with --truth-dir).
    #[arg(long)]
    count: Option<usize>,
    /// Use every `.pgm`/`.dmt` image in this directory as ground truth.
    #[arg(long)]
    truth_dir: Option<PathBuf>,
    #[arg(long)]
    size: Option<usize>,
    #[arg(long)]
    noise_std: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    shared_mask: bool,
    /// Dataset directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ScheduleFlags {
    #[arg(long)]
    timesteps: Option<usize>,
    #[arg(long)]
    beta_start: Option<f64>,
    #[arg(long)]
    beta_end: Option<f64>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Dataset manifest or its directory.
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Output checkpoint.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-epoch loss log (defaults to `<out>.losses.toml`).
    #[arg(long)]
    loss_log: Option<PathBuf>,
    #[command(flatten)]
    schedule: ScheduleFlags,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long = "lr")]
    learning_rate: Option<f64>,
    #[arg(long)]
    depth: Option<usize>,
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    kernel: Option<usize>,
    #[arg(long)]
    p_norm: Option<u8>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for per-item gradients.
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Debug, Args)]
struct ReconstructArgs {
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Complex k-space tensor of one acquisition.
    #[arg(long, requires = "mask", conflicts_with = "dataset")]
    measurement: Option<PathBuf>,
    /// Mask tensor matching --measurement.
    #[arg(long)]
    mask: Option<PathBuf>,
    /// Reconstruct every entry of a dataset manifest instead.
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Noise level recorded in the report for --measurement input.
    #[arg(long)]
    noise_std: Option<f64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Plain sampling without the data-consistency step.
    #[arg(long)]
    no_dc: bool,
    #[arg(long)]
    dc_step: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Record per-step measurement residuals in the report.
    #[arg(long)]
    trace: bool,
    #[command(flatten)]
    schedule: ScheduleFlags,
    /// Reconstruct up to this many images concurrently.
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    /// Directory of reconstructions.
    #[arg(long)]
    recon: PathBuf,
    /// Directory of ground-truth images with matching file stems.
    #[arg(long)]
    truth: PathBuf,
    /// Fixed intensity range; `reference` uses each truth's max - min.
    #[arg(long)]
    data_range: Option<String>,
    /// 11x11 Gaussian SSIM window instead of 7x7 uniform.
    #[arg(long)]
    gaussian: bool,
    /// Write the report here as well as to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    jobs: Option<usize>,
}

fn apply_mask_flags(cfg: &mut RunConfig, flags: &MaskFlags) {
    if let Some(p) = flags.pattern {
        cfg.mask.pattern = p;
    }
    if let Some(r) = flags.acceleration {
        cfg.mask.acceleration = r;
    }
    if let Some(f) = flags.center_fraction {
        cfg.mask.profile.center_fraction = f;
    }
}

fn apply_schedule_flags(cfg: &mut RunConfig, flags: &ScheduleFlags) {
    if let Some(t) = flags.timesteps {
        cfg.schedule_mut().timesteps = t;
    }
    if let Some(b) = flags.beta_start {
        cfg.schedule_mut().beta_start = b;
    }
    if let Some(b) = flags.beta_end {
        cfg.schedule_mut().beta_end = b;
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    match cli.command {
        Command::Mask(a) => {
            apply_mask_flags(&mut cfg, &a.mask);
            if let Some(s) = a.size {
                cfg.mask.height = s;
                cfg.mask.width = s;
            }
            if let Some(h) = a.height {
                cfg.mask.height = h;
            }
            if let Some(w) = a.width {
                cfg.mask.width = w;
            }
            if let Some(s) = a.seed {
                cfg.mask.seed = s;
            }
            cfg.validate()?;
            commands::mask(&cfg, &a.out, a.pgm.as_deref())
        }
        Command::Simulate(a) => {
            apply_mask_flags(&mut cfg, &a.mask);
            if let Some(n) = a.count {
                cfg.data.count = n;
            }
            if let Some(s) = a.size {
                cfg.data.phantom.size = s;
            }
            if let Some(s) = a.noise_std {
                cfg.data.noise_std = s;
            }
            if let Some(s) = a.seed {
                cfg.data.seed = s;
            }
            if a.shared_mask {
                cfg.data.shared_mask = true;
            }
            if let Some(o) = a.out {
                cfg.paths.dataset = Some(o);
            }
            cfg.validate()?;
            commands::simulate(&cfg, a.truth_dir.as_deref())
        }
        Command::Train(a) => {
            apply_schedule_flags(&mut cfg, &a.schedule);
            let t = &mut cfg.trainer;
            if let Some(e) = a.epochs {
                t.epochs = e;
            }
            if let Some(b) = a.batch_size {
                t.batch_size = b;
            }
            if let Some(lr) = a.learning_rate {
                t.learning_rate = lr;
            }
            if let Some(s) = a.seed {
                t.seed = s;
            }
            let d = &mut cfg.denoiser;
            if let Some(v) = a.depth {
                d.depth = v;
            }
            if let Some(v) = a.width {
                d.width = v;
            }
            if let Some(v) = a.kernel {
                d.kernel = v;
            }
            if let Some(v) = a.p_norm {
                d.p_norm = v;
            }
            if let Some(p) = a.dataset {
                cfg.paths.dataset = Some(p);
            }
            if let Some(p) = a.out {
                cfg.paths.checkpoint = Some(p);
            }
            cfg.validate()?;
            commands::with_jobs(a.jobs, || commands::train(&cfg, a.loss_log.as_deref()))
        }
        Command::Reconstruct(a) => {
            apply_schedule_flags(&mut cfg, &a.schedule);
            let s = &mut cfg.sampler;
            if let Some(v) = a.dc_step {
                s.dc_step = v;
            }
            if let Some(v) = a.seed {
                s.seed = v;
            }
            if a.no_dc {
                s.enable_dc = false;
            }
            if a.trace {
                s.record_trajectory = true;
            }
            if let Some(p) = a.checkpoint {
                cfg.paths.checkpoint = Some(p);
            }
            if let Some(p) = a.out {
                cfg.paths.output = Some(p);
            }
            if let Some(p) = a.dataset {
                cfg.paths.dataset = Some(p);
            }
            cfg.validate()?;
            let input = match (a.measurement, a.mask) {
                (Some(k), Some(m)) => commands::ReconInput::Single {
                    kspace: k,
                    mask: m,
                    noise_std: a.noise_std.unwrap_or(0.0),
                },
                (None, None) => {
                    commands::ReconInput::Dataset(cfg.paths.dataset.clone().ok_or_else(|| {
                        CliError::Usage("give --measurement and --mask, or --dataset".into())
                    })?)
                }
                _ => {
                    return Err(CliError::Usage(
                        "--measurement and --mask go together".into(),
                    ))
                }
            };
            commands::with_jobs(a.jobs, || commands::reconstruct(&cfg, input))
        }
        Command::Evaluate(a) => {
            if let Some(r) = a.data_range {
                cfg.metrics.data_range = match r.as_str() {
                    "reference" => diffdc_core::metrics::DataRange::Reference,
                    v => diffdc_core::metrics::DataRange::Fixed(v.parse().map_err(|_| {
                        CliError::Usage(format!(
                            "--data-range: `{v}` is neither a number nor `reference`"
                        ))
                    })?),
                };
            }
            if a.gaussian {
                cfg.metrics.window = diffdc_core::metrics::SsimWindow::Gaussian;
            }
            cfg.validate()?;
            commands::with_jobs(a.jobs, || {
                commands::evaluate(&cfg, &a.recon, &a.truth, a.out.as_deref())
            })
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
