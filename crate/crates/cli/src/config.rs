//! Layered run configuration: built-in defaults, then a TOML file, then flags.

use std::path::{Path, PathBuf};

use diffdc_core::data::{DatasetConfig, PhantomSpec};
use diffdc_core::denoiser::{DenoiserConfig, TrainerConfig};
use diffdc_core::masks::{MaskParams, MaskPattern};
use diffdc_core::metrics::{DataRange, MetricConfig, SsimWindow};
use diffdc_core::schedule::ScheduleParams;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MaskSection {
    pub pattern: MaskPattern,
    pub acceleration: f64,
    pub seed: u64,
    pub height: usize,
    pub width: usize,
    pub profile: MaskParams,
}

impl Default for MaskSection {
    fn default() -> Self {
        Self {
            pattern: MaskPattern::G1d,
            acceleration: 8.0,
            seed: 0,
            height: 64,
            width: 64,
            profile: MaskParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub count: usize,
    pub noise_std: f64,
    pub seed: u64,
    pub shared_mask: bool,
    pub phantom: PhantomSpec,
}

impl Default for DataSection {
    fn default() -> Self {
        Self {
            count: 100,
            noise_std: 0.0,
            seed: 0,
            shared_mask: false,
            phantom: PhantomSpec::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerSection {
    pub dc_step: f64,
    pub enable_dc: bool,
    pub seed: u64,
    pub record_trajectory: bool,
}

impl Default for SamplerSection {
    fn default() -> Self {
        Self {
            dc_step: 1.0,
            enable_dc: true,
            seed: 0,
            record_trajectory: false,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathSection {
    pub dataset: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// `None` means "built-in default" for training and "as stored in the
    /// checkpoint" for reconstruction.
    pub schedule: Option<ScheduleParams>,
    pub mask: MaskSection,
    pub data: DataSection,
    pub denoiser: DenoiserConfig,
    pub trainer: TrainerConfig,
    pub sampler: SamplerSection,
    pub metrics: MetricConfig,
    pub paths: PathSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            schedule: None,
            mask: MaskSection::default(),
            data: DataSection::default(),
            denoiser: DenoiserConfig::default(),
            trainer: TrainerConfig::default(),
            sampler: SamplerSection::default(),
            metrics: MetricConfig {
                data_range: DataRange::Fixed(1.0),
                window: SsimWindow::Uniform,
            },
            paths: PathSection::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn schedule_or_default(&self) -> ScheduleParams {
        self.schedule.unwrap_or_default()
    }

    pub fn schedule_mut(&mut self) -> &mut ScheduleParams {
        self.schedule.get_or_insert_with(ScheduleParams::default)
    }

    pub fn dataset_config(&self) -> DatasetConfig {
        DatasetConfig {
            count: self.data.count,
            pattern: self.mask.pattern,
            acceleration: self.mask.acceleration,
            noise_std: self.data.noise_std,
            seed: self.data.seed,
            shared_mask: self.data.shared_mask,
            phantom: self.data.phantom,
            mask: self.mask.profile,
        }
    }

    /// Checks every section so that no command starts work on a bad config.
    pub fn validate(&self) -> Result<(), CliError> {
        let config_err = |e: diffdc_core::Error| CliError::Config(e.to_string());
        if let Some(s) = &self.schedule {
            s.build().map_err(config_err)?;
        }
        let m = &self.mask;
        if m.height == 0 || m.width == 0 {
            return Err(CliError::Config(
                "mask height and width must be positive".into(),
            ));
        }
        if !(m.acceleration.is_finite() && m.acceleration >= 1.0) {
            return Err(CliError::Config(format!(
                "mask acceleration {} must be >= 1",
                m.acceleration
            )));
        }
        m.profile.validate().map_err(config_err)?;
        self.dataset_config().validate().map_err(config_err)?;
        self.denoiser.validate().map_err(config_err)?;
        self.trainer.validate().map_err(config_err)?;
        if !(0.0..=1.0).contains(&self.sampler.dc_step) {
            return Err(CliError::Config(format!(
                "sampler dc_step {} must lie in [0, 1]",
                self.sampler.dc_step
            )));
        }
        if let DataRange::Fixed(r) = self.metrics.data_range {
            if !(r.is_finite() && r > 0.0) {
                return Err(CliError::Config(format!(
                    "metrics data_range {r} must be positive"
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_round_trip() {
        let c = RunConfig::default();
        c.validate().unwrap();
        let back: RunConfig = toml::from_str(&toml::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn partial_file_keeps_defaults() {
        let c: RunConfig = toml::from_str(
            "[mask]\npattern = \"poisson\"\n[schedule]\ntimesteps = 50\n[trainer]\nepochs = 3\n",
        )
        .unwrap();
        assert_eq!(c.mask.pattern, MaskPattern::Poisson);
        assert_eq!(c.mask.acceleration, 8.0);
        assert_eq!(c.schedule.unwrap().timesteps, 50);
        assert_eq!(
            c.schedule.unwrap().beta_end,
            ScheduleParams::default().beta_end
        );
        assert_eq!(c.trainer.epochs, 3);
        assert_eq!(c.trainer.batch_size, TrainerConfig::default().batch_size);
    }

    #[test]
    fn unknown_keys_and_bad_values_rejected() {
        assert!(toml::from_str::<RunConfig>("[mask]\naccel = 4\n").is_err());
        let mut c = RunConfig::default();
        c.sampler.dc_step = 2.0;
        assert!(c.validate().is_err());
        let mut c = RunConfig::default();
        c.data.noise_std = -0.1;
        assert!(c.validate().is_err());
        let mut c = RunConfig::default();
        c.denoiser.p_norm = 3;
        assert!(c.validate().is_err());
    }
}
