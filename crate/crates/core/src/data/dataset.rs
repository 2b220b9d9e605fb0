//! Paired (zero-filled condition, ground truth) datasets on disk.

use std::ops::Range;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::phantom::{gen_phantom, PhantomSpec};
use super::tensor::{load_tensor, save_tensor, write_bytes, Tensor};
use crate::denoiser::TrainingPair;
use crate::error::{Error, Result};
use crate::forward::{KSpaceMeasurement, MeasurementOp};
use crate::masks::{generate, MaskParams, MaskPattern};
use crate::numerics::{RandomSource, RealImage};

pub const MANIFEST_FILE: &str = "manifest.toml";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub count: usize,
    pub pattern: MaskPattern,
    pub acceleration: f64,
    /// Standard deviation of the complex k-space noise, `E|e|^2 = noise_std^2`.
    pub noise_std: f64,
    pub seed: u64,
    /// One mask for every item instead of a fresh draw per item.
    pub shared_mask: bool,
    pub phantom: PhantomSpec,
    pub mask: MaskParams,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            count: 100,
            pattern: MaskPattern::G1d,
            acceleration: 8.0,
            noise_std: 0.0,
            seed: 0,
            shared_mask: false,
            phantom: PhantomSpec::default(),
            mask: MaskParams::default(),
        }
    }
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.count == 0 {
            return Err(Error::invalid("count", "must be at least 1"));
        }
        if !(self.noise_std.is_finite() && self.noise_std >= 0.0) {
            return Err(Error::invalid(
                "noise_std",
                format!("{} must be >= 0", self.noise_std),
            ));
        }
        if !(self.acceleration.is_finite() && self.acceleration >= 1.0) {
            return Err(Error::invalid(
                "acceleration",
                format!("{} must be >= 1", self.acceleration),
            ));
        }
        self.phantom.validate()?;
        self.mask.validate()
    }

    pub fn mask_seed(&self, index: usize) -> u64 {
        if self.shared_mask {
            RandomSource::derive(self.seed, u64::MAX).next_u64()
        } else {
            RandomSource::derive(self.seed, index as u64).next_u64()
        }
    }
}

/// One simulated acquisition.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub truth: RealImage,
    pub condition: RealImage,
    pub measurement: KSpaceMeasurement,
}

impl Sample {
    pub fn training_pair(&self) -> TrainingPair {
        TrainingPair {
            condition: self.condition.clone(),
            truth: self.truth.clone(),
        }
    }
}

/// Item `index` of the dataset described by `config`; items are independent
/// of each other and of `config.count`.
pub fn generate_sample(config: &DatasetConfig, index: usize) -> Result<Sample> {
    let mut rng = item_source(config, index);
    let truth = gen_phantom(&config.phantom, &mut rng)?;
    acquire(config, index, truth, &mut rng)
}

/// Simulates the acquisition of item `index` from a given ground truth.
pub fn simulate_sample(config: &DatasetConfig, index: usize, truth: RealImage) -> Result<Sample> {
    let mut rng = item_source(config, index);
    acquire(config, index, truth, &mut rng)
}

// Phantom and noise draw from a source unrelated to the mask seed.
fn item_source(config: &DatasetConfig, index: usize) -> RandomSource {
    RandomSource::derive(config.seed ^ 0x9e37_79b9_7f4a_7c15, index as u64)
}

fn acquire(
    config: &DatasetConfig,
    index: usize,
    truth: RealImage,
    rng: &mut RandomSource,
) -> Result<Sample> {
    let mask = generate(
        config.pattern,
        truth.height(),
        truth.width(),
        config.acceleration,
        config.mask_seed(index),
        &config.mask,
    )?;
    let op = MeasurementOp::new(mask);
    let measurement = op.undersample(&truth, config.noise_std, rng)?;
    let condition = op.zero_fill(&measurement)?;
    Ok(Sample {
        truth,
        condition,
        measurement,
    })
}

/// Items `range` generated in parallel, returned in index order.
pub fn generate_samples(config: &DatasetConfig, range: Range<usize>) -> Result<Vec<Sample>> {
    config.validate()?;
    range
        .into_par_iter()
        .map(|i| generate_sample(config, i))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetEntry {
    pub name: String,
    pub truth: PathBuf,
    pub condition: PathBuf,
    pub mask: PathBuf,
    pub kspace: PathBuf,
    pub mask_seed: u64,
}

/// Generation parameters plus per-item file paths relative to the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub config: DatasetConfig,
    /// Directory the ground truths were read from; absent for phantoms.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth_source: Option<PathBuf>,
    pub entries: Vec<DatasetEntry>,
}

impl DatasetManifest {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("manifest fields are plain values")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::Manifest(format!("{}: {e}", path.display())))
    }

    /// Reads every entry, checking that files parse, shapes agree and each
    /// mask is the one its recorded seed generates.
    pub fn load_samples(&self, dir: &Path) -> Result<Vec<Sample>> {
        self.config.validate()?;
        self.entries
            .par_iter()
            .map(|entry| self.load_entry(dir, entry))
            .collect()
    }

    fn load_entry(&self, dir: &Path, entry: &DatasetEntry) -> Result<Sample> {
        let cfg = &self.config;
        let truth = load_tensor(dir.join(&entry.truth))?.to_real_image()?;
        let condition = load_tensor(dir.join(&entry.condition))?.to_real_image()?;
        let kspace = load_tensor(dir.join(&entry.kspace))?.to_complex_image()?;
        let stored = load_tensor(dir.join(&entry.mask))?.to_mask()?;
        let expected = generate(
            cfg.pattern,
            stored.height(),
            stored.width(),
            cfg.acceleration,
            entry.mask_seed,
            &cfg.mask,
        )?;
        if stored.keep() != expected.keep() {
            return Err(Error::Manifest(format!(
                "{}: mask does not match {} x{} with seed {}",
                entry.name, cfg.pattern, cfg.acceleration, entry.mask_seed
            )));
        }
        truth.ensure_same_shape(&condition)?;
        if kspace.shape() != truth.shape() || stored.shape() != truth.shape() {
            return Err(Error::Manifest(format!("{}: shapes disagree", entry.name)));
        }
        let measurement = KSpaceMeasurement::new(kspace, expected, cfg.noise_std)?;
        Ok(Sample {
            truth,
            condition,
            measurement,
        })
    }
}

/// Generates `config.count` phantom items under `out_dir` and writes the
/// manifest.
pub fn build_dataset(config: &DatasetConfig, out_dir: &Path) -> Result<DatasetManifest> {
    config.validate()?;
    let names: Vec<String> = (0..config.count).map(|i| format!("{i:05}")).collect();
    write_dataset(config, &names, None, out_dir, |i| {
        generate_sample(config, i)
    })
}

/// Like [`build_dataset`] but with given `(name, truth)` images; the item
/// count is the number of images.
pub fn build_dataset_from_images(
    config: &DatasetConfig,
    images: Vec<(String, RealImage)>,
    source: Option<PathBuf>,
    out_dir: &Path,
) -> Result<DatasetManifest> {
    let config = DatasetConfig {
        count: images.len(),
        ..*config
    };
    config.validate()?;
    let (names, truths): (Vec<String>, Vec<RealImage>) = images.into_iter().unzip();
    write_dataset(&config, &names, source, out_dir, |i| {
        simulate_sample(&config, i, truths[i].clone())
    })
}

fn write_dataset(
    config: &DatasetConfig,
    names: &[String],
    truth_source: Option<PathBuf>,
    out_dir: &Path,
    make: impl Fn(usize) -> Result<Sample> + Sync,
) -> Result<DatasetManifest> {
    for sub in ["truth", "condition", "mask", "kspace"] {
        let dir = out_dir.join(sub);
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    }
    let entries = names
        .par_iter()
        .enumerate()
        .map(|(i, name)| -> Result<DatasetEntry> {
            let sample = make(i)?;
            let file = format!("{name}.dmt");
            let entry = DatasetEntry {
                name: name.clone(),
                truth: Path::new("truth").join(&file),
                condition: Path::new("condition").join(&file),
                mask: Path::new("mask").join(&file),
                kspace: Path::new("kspace").join(&file),
                mask_seed: config.mask_seed(i),
            };
            save_tensor(
                out_dir.join(&entry.truth),
                &Tensor::from_real_image(&sample.truth),
            )?;
            save_tensor(
                out_dir.join(&entry.condition),
                &Tensor::from_real_image(&sample.condition),
            )?;
            save_tensor(
                out_dir.join(&entry.mask),
                &Tensor::from_mask(sample.measurement.mask()),
            )?;
            save_tensor(
                out_dir.join(&entry.kspace),
                &Tensor::from_complex_image(sample.measurement.kdata()),
            )?;
            Ok(entry)
        })
        .collect::<Result<Vec<_>>>()?;
    let manifest = DatasetManifest {
        config: *config,
        truth_source,
        entries,
    };
    write_bytes(&out_dir.join(MANIFEST_FILE), manifest.to_toml().as_bytes())?;
    Ok(manifest)
}
