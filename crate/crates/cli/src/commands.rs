use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use diffdc_core::data::{
    build_dataset, build_dataset_from_images, load_checkpoint, load_image_file, load_tensor,
    save_checkpoint, save_tensor, write_pgm, Checkpoint, CheckpointMeta, DatasetManifest, Tensor,
    MANIFEST_FILE,
};
use diffdc_core::denoiser::{train as run_training, DenoiserParams, TrainState, TrainingPair};
use diffdc_core::masks::{generate, sampled_fraction};
use diffdc_core::metrics::{psnr, ssim, MetricConfig, MetricReport};
use diffdc_core::sampler::{reconstruct as run_sampler, ReconstructionReport, SamplerConfig};
use diffdc_core::{KSpaceMeasurement, RandomSource, RealImage};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::CliError;

/// Runs `f` inside a pool of `jobs` threads, or the global pool.
pub fn with_jobs<T: Send>(
    jobs: Option<usize>,
    f: impl FnOnce() -> Result<T, CliError> + Send,
) -> Result<T, CliError> {
    match jobs {
        None => f(),
        Some(0) => Err(CliError::Usage("--jobs must be at least 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Data(e.to_string()))?
            .install(f),
    }
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| {
        CliError::Runtime(diffdc_core::Error::Io {
            path: path.to_path_buf(),
            source: e,
        })
    })
}

fn create_dir(path: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(path).map_err(|e| {
        CliError::Runtime(diffdc_core::Error::Io {
            path: path.to_path_buf(),
            source: e,
        })
    })
}

fn require<'a>(value: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path, CliError> {
    value
        .as_deref()
        .ok_or_else(|| CliError::Usage(format!("missing {flag}")))
}

fn manifest_path(path: &Path) -> PathBuf {
    if path.is_dir() {
        path.join(MANIFEST_FILE)
    } else {
        path.to_path_buf()
    }
}

fn load_dataset(
    path: &Path,
) -> Result<(DatasetManifest, Vec<diffdc_core::data::Sample>), CliError> {
    let path = manifest_path(path);
    let manifest = DatasetManifest::load(&path)?;
    let dir = path.parent().unwrap_or(Path::new("."));
    let samples = manifest.load_samples(dir)?;
    Ok((manifest, samples))
}

pub fn mask(cfg: &RunConfig, out: &Path, pgm: Option<&Path>) -> Result<(), CliError> {
    let m = &cfg.mask;
    let mask = generate(
        m.pattern,
        m.height,
        m.width,
        m.acceleration,
        m.seed,
        &m.profile,
    )?;
    save_tensor(out, &Tensor::from_mask(&mask))?;
    if let Some(p) = pgm {
        let img = RealImage::new(
            m.height,
            m.width,
            mask.keep().iter().map(|&k| k as u8 as f64).collect(),
        )?;
        write_pgm(p, &img)?;
    }
    println!(
        "pattern={} acceleration={} seed={} kept={} total={} sampled_fraction={:.6}",
        m.pattern,
        m.acceleration,
        m.seed,
        mask.count(),
        m.height * m.width,
        sampled_fraction(&mask)
    );
    Ok(())
}

fn image_files(dir: &Path) -> Result<BTreeMap<String, PathBuf>, CliError> {
    let entries = std::fs::read_dir(dir).map_err(|e| {
        CliError::Runtime(diffdc_core::Error::Io {
            path: dir.to_path_buf(),
            source: e,
        })
    })?;
    let mut files = BTreeMap::new();
    for entry in entries.flatten() {
        let path = entry.path();
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase);
        let Some(ext) = ext.filter(|e| e == "dmt" || e == "pgm") else {
            continue;
        };
        let Some(stem) = path.file_stem().and_then(|s| s.to_str()) else {
            continue;
        };
        // A tensor beats its greymap preview.
        if ext == "dmt" || !files.contains_key(stem) {
            files.insert(stem.to_string(), path.clone());
        }
    }
    Ok(files)
}

pub fn simulate(cfg: &RunConfig, truth_dir: Option<&Path>) -> Result<(), CliError> {
    let out = require(&cfg.paths.dataset, "--out")?;
    let data_cfg = cfg.dataset_config();
    let manifest = match truth_dir {
        None => build_dataset(&data_cfg, out)?,
        Some(dir) => {
            let files = image_files(dir)?;
            if files.is_empty() {
                return Err(CliError::Data(format!(
                    "no .pgm or .dmt images in {}",
                    dir.display()
                )));
            }
            let images = files
                .into_iter()
                .map(|(name, path)| Ok((name, load_image_file(&path)?)))
                .collect::<Result<Vec<_>, diffdc_core::Error>>()?;
            build_dataset_from_images(&data_cfg, images, Some(dir.to_path_buf()), out)?
        }
    };
    eprintln!("simulated {} acquisitions", manifest.entries.len());
    println!("{}", out.join(MANIFEST_FILE).display());
    Ok(())
}

#[derive(Serialize)]
struct LossLog<'a> {
    epoch_losses: &'a [f64],
}

pub fn train(cfg: &RunConfig, loss_log: Option<&Path>) -> Result<(), CliError> {
    let dataset = require(&cfg.paths.dataset, "--dataset")?;
    let out = require(&cfg.paths.checkpoint, "--out")?;
    let schedule_params = cfg.schedule_or_default();
    let schedule = schedule_params.build()?;
    let (_, samples) = load_dataset(dataset)?;
    let pairs: Vec<TrainingPair> = samples.iter().map(|s| s.training_pair()).collect();
    let trainer = cfg.trainer;
    let mut init_rng = RandomSource::derive(trainer.seed, 0);
    let params = DenoiserParams::<f32>::init(cfg.denoiser, &mut init_rng)?;
    let state = TrainState::new(params, trainer.learning_rate, trainer.adam);
    let mut rng = RandomSource::derive(trainer.seed, 1);
    let started = Instant::now();
    eprintln!(
        "training on {} pairs: {} epochs, batch {}, T = {}",
        pairs.len(),
        trainer.epochs,
        trainer.batch_size,
        schedule.timesteps()
    );
    let state = run_training(
        state,
        &pairs,
        &schedule,
        &trainer,
        &mut rng,
        |epoch, loss| {
            eprintln!(
                "epoch {}/{} loss {loss:.4} ({:.1}s)",
                epoch + 1,
                trainer.epochs,
                started.elapsed().as_secs_f64()
            );
        },
    )?;
    let mut meta = CheckpointMeta::new(cfg.denoiser, schedule_params);
    meta.trainer = Some(trainer);
    meta.epoch_losses = state.epoch_losses.clone();
    save_checkpoint(
        out,
        &Checkpoint {
            meta,
            params: state.params,
        },
    )?;
    let log_path = loss_log
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from(format!("{}.losses.toml", out.display())));
    let log = toml::to_string(&LossLog {
        epoch_losses: &state.epoch_losses,
    })
    .expect("plain values");
    write_text(&log_path, &log)?;
    println!("{}", out.display());
    Ok(())
}

pub enum ReconInput {
    Single {
        kspace: PathBuf,
        mask: PathBuf,
        noise_std: f64,
    },
    Dataset(PathBuf),
}

#[derive(Serialize)]
struct ReportDoc<'a> {
    name: &'a str,
    checkpoint: &'a Path,
    report: &'a ReconstructionReport,
    config: &'a RunConfig,
}

pub fn reconstruct(cfg: &RunConfig, input: ReconInput) -> Result<(), CliError> {
    let checkpoint_path = require(&cfg.paths.checkpoint, "--checkpoint")?;
    let out = require(&cfg.paths.output, "--out")?;
    let checkpoint = load_checkpoint(checkpoint_path)?;
    let mut effective = cfg.clone();
    let schedule_params = *effective.schedule.get_or_insert(checkpoint.meta.schedule);
    let schedule = schedule_params.build()?;
    let items: Vec<(String, KSpaceMeasurement)> = match input {
        ReconInput::Single {
            kspace,
            mask,
            noise_std,
        } => {
            let k = load_tensor(&kspace)?.to_complex_image()?;
            let m = load_tensor(&mask)?.to_mask()?;
            let name = kspace
                .file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or("recon")
                .to_string();
            vec![(name, KSpaceMeasurement::new(k, m, noise_std)?)]
        }
        ReconInput::Dataset(path) => {
            let (manifest, samples) = load_dataset(&path)?;
            manifest
                .entries
                .iter()
                .zip(samples)
                .map(|(e, s)| (e.name.clone(), s.measurement))
                .collect()
        }
    };
    create_dir(out)?;
    let s = &effective.sampler;
    items
        .par_iter()
        .enumerate()
        .try_for_each(|(i, (name, b))| -> Result<(), CliError> {
            let config = SamplerConfig {
                schedule: schedule.clone(),
                dc_step: s.dc_step,
                enable_dc: s.enable_dc,
                seed: s.seed.wrapping_add(i as u64),
                record_trajectory: s.record_trajectory,
            };
            let (image, report) = run_sampler(&checkpoint.params, b, &config)?;
            save_tensor(
                out.join(format!("{name}.dmt")),
                &Tensor::from_real_image(&image),
            )?;
            write_pgm(out.join(format!("{name}.pgm")), &image)?;
            let doc = ReportDoc {
                name,
                checkpoint: checkpoint_path,
                report: &report,
                config: &effective,
            };
            let text = toml::to_string(&doc).expect("plain values");
            write_text(&out.join(format!("{name}.report.toml")), &text)?;
            println!(
                "{name}: steps={} final_residual={:.3e} wall_time_s={:.2}",
                report.steps, report.final_residual, report.wall_time_s
            );
            Ok(())
        })
}

#[derive(Serialize)]
struct EvaluationDoc<'a> {
    names: Vec<&'a str>,
    #[serde(flatten)]
    report: &'a MetricReport,
    metrics: &'a MetricConfig,
}

pub fn evaluate(
    cfg: &RunConfig,
    recon_dir: &Path,
    truth_dir: &Path,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let recon = image_files(recon_dir)?;
    let truth = image_files(truth_dir)?;
    let only_recon: Vec<&str> = recon
        .keys()
        .filter(|k| !truth.contains_key(*k))
        .map(String::as_str)
        .collect();
    let only_truth: Vec<&str> = truth
        .keys()
        .filter(|k| !recon.contains_key(*k))
        .map(String::as_str)
        .collect();
    if !only_recon.is_empty() || !only_truth.is_empty() {
        return Err(CliError::Data(format!(
            "unmatched files: only in {}: [{}]; only in {}: [{}]",
            recon_dir.display(),
            only_recon.join(", "),
            truth_dir.display(),
            only_truth.join(", ")
        )));
    }
    if recon.is_empty() {
        return Err(CliError::Data(format!(
            "no images in {}",
            recon_dir.display()
        )));
    }
    let metrics = &cfg.metrics;
    let names: Vec<&str> = recon.keys().map(String::as_str).collect();
    let scores = names
        .par_iter()
        .map(|name| -> Result<(f64, f64), diffdc_core::Error> {
            let r = load_image_file(&recon[*name])?;
            let t = load_image_file(&truth[*name])?;
            let range = metrics.resolve_range(&t)?;
            Ok((psnr(&t, &r, range)?, ssim(&t, &r, range, metrics.window)?))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let (p, s): (Vec<f64>, Vec<f64>) = scores.into_iter().unzip();
    let report = MetricReport::from_scores(p, s)?;
    let doc = toml::to_string(&EvaluationDoc {
        names,
        report: &report,
        metrics,
    })
    .expect("plain values");
    if let Some(path) = out {
        write_text(path, &doc)?;
    }
    eprintln!(
        "{} images: PSNR {:.2} +- {:.2} dB, SSIM {:.4} +- {:.4}",
        report.count, report.psnr_mean, report.psnr_std, report.ssim_mean, report.ssim_std
    );
    print!("{doc}");
    Ok(())
}
