//! Shared fixtures for the benchmarks.

use diffdc_core::data::{generate_samples, DatasetConfig, Sample};
use diffdc_core::{DenoiserConfig, DenoiserParams, RandomSource};

/// One simulated 64x64, x8 G1D item.
pub fn sample(seed: u64) -> Sample {
    let cfg = DatasetConfig {
        count: 1,
        seed,
        ..DatasetConfig::default()
    };
    generate_samples(&cfg, 0..1)
        .expect("default dataset config is valid")
        .remove(0)
}

/// Default-sized network with random weights.
pub fn network(seed: u64) -> DenoiserParams<f32> {
    DenoiserParams::init(DenoiserConfig::default(), &mut RandomSource::new(seed))
        .expect("default denoiser config is valid")
}
