//! Reverse-process samplers: plain iterative refinement and refinement with
//! a data-consistency correction after every step.

use std::time::Instant;

use serde::Serialize;

use crate::denoiser::NoisePredictor;
use crate::error::{Error, Result};
use crate::forward::{KSpaceMeasurement, MeasurementOp};
use crate::numerics::{gaussian_image, ComplexImage, RandomSource, RealImage};
use crate::schedule::NoiseSchedule;

#[derive(Debug, Clone, PartialEq)]
pub struct SamplerConfig {
    pub schedule: NoiseSchedule,
    /// Data-consistency step size in `[0, 1]`.
    pub dc_step: f64,
    pub enable_dc: bool,
    pub seed: u64,
    /// Keep the per-step measurement residuals.
    pub record_trajectory: bool,
}

impl SamplerConfig {
    pub fn new(schedule: NoiseSchedule, seed: u64) -> Self {
        Self {
            schedule,
            dc_step: 1.0,
            enable_dc: true,
            seed,
            record_trajectory: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.dc_step) {
            return Err(Error::invalid(
                "dc_step",
                format!("{} must lie in [0, 1]", self.dc_step),
            ));
        }
        Ok(())
    }
}

/// `(y_t - sqrt(1 - alpha_bar) f(x, y_t, alpha_bar)) / sqrt(alpha_bar)`.
pub fn estimate_y0(
    predictor: &impl NoisePredictor,
    x_cond: &RealImage,
    y_t: &RealImage,
    alpha_bar: f64,
) -> Result<RealImage> {
    if !(alpha_bar > 0.0 && alpha_bar <= 1.0) {
        return Err(Error::invalid(
            "alpha_bar",
            format!("{alpha_bar} outside (0, 1]"),
        ));
    }
    let eps = predictor.predict_noise(x_cond, y_t, alpha_bar)?;
    y_t.ensure_same_shape(&eps)?;
    let (s, n) = (alpha_bar.sqrt(), (1.0 - alpha_bar).sqrt());
    Ok(y_t.zip_map(&eps, |y, e| (y - n * e) / s))
}

/// One ancestral step `y_t -> y_{t-1}`.
///
/// `z` must be all zeros at `t = 1`.
pub fn reverse_step(
    predictor: &impl NoisePredictor,
    x_cond: &RealImage,
    y_t: &RealImage,
    t: usize,
    schedule: &NoiseSchedule,
    z: &RealImage,
) -> Result<RealImage> {
    if t == 0 || t > schedule.timesteps() {
        return Err(Error::invalid(
            "t",
            format!("{t} outside 1..={}", schedule.timesteps()),
        ));
    }
    y_t.ensure_same_shape(z)?;
    if t == 1 && z.data().iter().any(|&v| v != 0.0) {
        return Err(Error::invalid("z", "must be zero at the final step"));
    }
    let eps = predictor.predict_noise(x_cond, y_t, schedule.alpha_bar(t))?;
    y_t.ensure_same_shape(&eps)?;
    let inv_sqrt_alpha = 1.0 / schedule.alpha(t).sqrt();
    let eps_coef = schedule.beta(t) / schedule.one_minus_alpha_bar(t).sqrt();
    let sigma = schedule.beta(t).sqrt();
    let mean = y_t.zip_map(&eps, |y, e| inv_sqrt_alpha * (y - eps_coef * e));
    Ok(mean.zip_map(z, |m, z| m + sigma * z))
}

/// Shared loop: draw `y_T`, then for `t = T..1` take a reverse step and hand
/// the result to `correct`, whose output becomes the next state.
fn run_chain(
    predictor: &impl NoisePredictor,
    x_cond: &RealImage,
    config: &SamplerConfig,
    mut correct: impl FnMut(usize, RealImage) -> Result<RealImage>,
) -> Result<RealImage> {
    config.validate()?;
    let (h, w) = x_cond.shape();
    let schedule = &config.schedule;
    let mut rng = RandomSource::new(config.seed);
    let mut y = gaussian_image(&mut rng, h, w);
    for t in (1..=schedule.timesteps()).rev() {
        let z = if t > 1 {
            gaussian_image(&mut rng, h, w)
        } else {
            RealImage::zeros(h, w)
        };
        let next = reverse_step(predictor, x_cond, &y, t, schedule, &z)?;
        if !next.is_finite() {
            return Err(Error::NonFinite("sampler state"));
        }
        y = correct(t, next)?;
    }
    Ok(y)
}

/// Unconditioned-by-measurement sampling from `y_T ~ N(0, I)`.
pub fn sample_plain(
    predictor: &impl NoisePredictor,
    x_cond: &RealImage,
    config: &SamplerConfig,
) -> Result<RealImage> {
    run_chain(predictor, x_cond, config, |_, y| Ok(y))
}

/// Measurement residual just before and just after one correction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ResidualRecord {
    pub t: usize,
    pub before: f64,
    pub after: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DcSample {
    /// Real part of the final corrected state.
    pub image: RealImage,
    /// The final corrected state itself, before taking the real part.
    pub state: ComplexImage,
    /// Empty unless trajectory recording was requested.
    pub residuals: Vec<ResidualRecord>,
}

/// Sampling with `y' = y - dc_step A*(A y - b)` applied after every reverse
/// step. The corrected image (real part) is what the next step consumes.
pub fn sample_dc(
    predictor: &impl NoisePredictor,
    x_cond: &RealImage,
    b: &KSpaceMeasurement,
    config: &SamplerConfig,
) -> Result<DcSample> {
    if !config.enable_dc {
        return Err(Error::invalid("enable_dc", "data consistency is disabled"));
    }
    if b.shape() != x_cond.shape() {
        return Err(Error::ShapeMismatch {
            expected: x_cond.shape(),
            actual: b.shape(),
        });
    }
    let op = MeasurementOp::new(b.mask().clone());
    let mut residuals = Vec::new();
    let mut state = None;
    let image = run_chain(predictor, x_cond, config, |t, y| {
        let y = y.to_complex();
        let corrected = op.dc_update_complex(&y, b, config.dc_step)?;
        if config.record_trajectory {
            residuals.push(ResidualRecord {
                t,
                before: op.residual_norm_complex(&y, b)?,
                after: op.residual_norm_complex(&corrected, b)?,
            });
        }
        let real = corrected.real();
        if t == 1 {
            state = Some(corrected);
        }
        Ok(real)
    })?;
    let state = state.expect("chain visits t = 1");
    Ok(DcSample {
        image,
        state,
        residuals,
    })
}

/// Machine-readable summary of one reconstruction.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReconstructionReport {
    pub height: usize,
    pub width: usize,
    pub pattern: Option<String>,
    pub acceleration: f64,
    pub noise_std: f64,
    pub timesteps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
    pub enable_dc: bool,
    pub dc_step: f64,
    pub seed: u64,
    pub record_trajectory: bool,
    pub steps: usize,
    pub wall_time_s: f64,
    pub final_residual: f64,
    pub residuals: Option<Vec<ResidualRecord>>,
}

impl ReconstructionReport {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("report fields are plain values")
    }
}

/// Zero-fill `b` into the condition image, then run the configured sampler.
pub fn reconstruct(
    predictor: &impl NoisePredictor,
    b: &KSpaceMeasurement,
    config: &SamplerConfig,
) -> Result<(RealImage, ReconstructionReport)> {
    config.validate()?;
    let started = Instant::now();
    let op = MeasurementOp::new(b.mask().clone());
    let x_cond = op.zero_fill(b)?;
    let (image, residuals) = if config.enable_dc {
        let out = sample_dc(predictor, &x_cond, b, config)?;
        (out.image, out.residuals)
    } else {
        (sample_plain(predictor, &x_cond, config)?, Vec::new())
    };
    let final_residual = op.residual_norm(&image, b)?;
    let (h, w) = b.shape();
    let schedule = &config.schedule;
    let report = ReconstructionReport {
        height: h,
        width: w,
        pattern: b.mask().pattern().map(|p| p.to_string()),
        acceleration: b.mask().acceleration(),
        noise_std: b.noise_std(),
        timesteps: schedule.timesteps(),
        beta_start: schedule.beta(1),
        beta_end: schedule.beta(schedule.timesteps()),
        enable_dc: config.enable_dc,
        dc_step: config.dc_step,
        seed: config.seed,
        record_trajectory: config.record_trajectory,
        steps: schedule.timesteps(),
        wall_time_s: started.elapsed().as_secs_f64(),
        final_residual,
        residuals: config.record_trajectory.then_some(residuals),
    };
    Ok((image, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::denoiser::{DenoiserConfig, DenoiserParams};
    use crate::masks::{gen_g1d, MaskParams, SamplingMask};

    fn zero_predictor() -> impl NoisePredictor {
        |x: &RealImage, _: &RealImage, _: f64| RealImage::zeros(x.height(), x.width())
    }

    fn constant_predictor(v: f64) -> impl NoisePredictor {
        move |x: &RealImage, _: &RealImage, _: f64| RealImage::filled(x.height(), x.width(), v)
    }

    fn phantom(n: usize) -> RealImage {
        RealImage::from_fn(n, n, |r, c| {
            let (dr, dc) = (r as f64 - n as f64 / 2.0, c as f64 - n as f64 / 2.0);
            if dr * dr + 2.0 * dc * dc < (n * n) as f64 / 8.0 {
                0.7
            } else {
                0.05
            }
        })
    }

    fn small_schedule() -> NoiseSchedule {
        NoiseSchedule::linear(12, 1e-3, 0.2).unwrap()
    }

    fn random_network() -> DenoiserParams<f32> {
        let mut rng = RandomSource::new(11);
        let config = DenoiserConfig {
            depth: 2,
            width: 4,
            ..DenoiserConfig::default()
        };
        let mut params = DenoiserParams::<f32>::init(config, &mut rng).unwrap();
        for v in params.data_mut() {
            *v += 0.05 * rng.normal() as f32;
        }
        params
    }

    #[test]
    fn estimate_y0_inverts_forward_diffusion() {
        let mut rng = RandomSource::new(1);
        let y0 = gaussian_image(&mut rng, 8, 8);
        let eps = gaussian_image(&mut rng, 8, 8);
        let ab = 0.37;
        let yt = crate::schedule::diffuse_at(&y0, ab, &eps).unwrap();
        let oracle = |_: &RealImage, _: &RealImage, _: f64| eps.clone();
        let est = estimate_y0(&oracle, &y0, &yt, ab).unwrap();
        for (a, b) in est.data().iter().zip(y0.data()) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn estimate_y0_scalar_cases() {
        let yt = RealImage::filled(1, 1, 1.0);
        let out = estimate_y0(&zero_predictor(), &yt, &yt, 0.25).unwrap();
        assert!((out.get(0, 0) - 2.0).abs() < 1e-15);
        let out = estimate_y0(&constant_predictor(0.5), &yt, &yt, 0.96).unwrap();
        let expected = (1.0 - 0.2 * 0.5) / 0.96f64.sqrt();
        assert!((out.get(0, 0) - expected).abs() < 1e-14);
        assert!(estimate_y0(&zero_predictor(), &yt, &yt, 0.0).is_err());
    }

    #[test]
    fn reverse_step_scalar_cases() {
        let s = NoiseSchedule::from_betas(vec![0.1]).unwrap();
        let y = RealImage::filled(1, 1, 1.0);
        let z = RealImage::zeros(1, 1);
        let out = reverse_step(&zero_predictor(), &y, &y, 1, &s, &z).unwrap();
        assert!((out.get(0, 0) - 1.0 / 0.9f64.sqrt()).abs() < 1e-15);
        let out = reverse_step(&constant_predictor(0.3), &y, &y, 1, &s, &z).unwrap();
        let expected = (1.0 - (0.1 / 0.1f64.sqrt()) * 0.3) / 0.9f64.sqrt();
        assert!((out.get(0, 0) - expected).abs() < 1e-14);
        let nonzero = RealImage::filled(1, 1, 1.0);
        assert!(reverse_step(&zero_predictor(), &y, &y, 1, &s, &nonzero).is_err());
        assert!(reverse_step(&zero_predictor(), &y, &y, 2, &s, &z).is_err());
    }

    #[test]
    fn reverse_step_is_affine_in_z() {
        let s = small_schedule();
        let mut rng = RandomSource::new(2);
        let y = gaussian_image(&mut rng, 6, 6);
        let z = gaussian_image(&mut rng, 6, 6);
        let t = 7;
        let a = reverse_step(&constant_predictor(0.2), &y, &y, t, &s, &z).unwrap();
        let b = reverse_step(&constant_predictor(0.2), &y, &y, t, &s, &z.scale(2.0)).unwrap();
        let sigma = s.beta(t).sqrt();
        for i in 0..y.len() {
            assert!((b.data()[i] - a.data()[i] - sigma * z.data()[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn noise_scale_forms_agree() {
        let s = NoiseSchedule::linear(200, 1e-3, 0.2).unwrap();
        for t in 1..=200 {
            assert!((s.beta(t).sqrt() - (1.0 - s.alpha(t)).sqrt()).abs() < 1e-15);
        }
    }

    #[test]
    fn plain_sampling_is_deterministic() {
        let net = random_network();
        let x = phantom(16);
        let config = SamplerConfig::new(small_schedule(), 9);
        let a = sample_plain(&net, &x, &config).unwrap();
        let b = sample_plain(&net, &x, &config).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.shape(), x.shape());
        let other = sample_plain(&net, &x, &SamplerConfig::new(small_schedule(), 10)).unwrap();
        assert_ne!(a, other);
    }

    #[test]
    fn single_step_oracle_returns_truth() {
        let y0 = phantom(8);
        let s = NoiseSchedule::from_betas(vec![0.3]).unwrap();
        let oracle = |_: &RealImage, y: &RealImage, ab: f64| {
            y.zip_map(&y0, |v, t| (v - ab.sqrt() * t) / (1.0 - ab).sqrt())
        };
        let out = sample_plain(&oracle, &y0, &SamplerConfig::new(s, 4)).unwrap();
        for (a, b) in out.data().iter().zip(y0.data()) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    fn measurement(mask: SamplingMask, truth: &RealImage, noise: f64) -> KSpaceMeasurement {
        let mut rng = RandomSource::new(3);
        MeasurementOp::new(mask)
            .undersample(truth, noise, &mut rng)
            .unwrap()
    }

    #[test]
    fn zero_step_matches_plain_bitwise() {
        let net = random_network();
        let truth = phantom(16);
        let mask = gen_g1d(16, 16, 4.0, 5, &MaskParams::default()).unwrap();
        let b = measurement(mask, &truth, 0.01);
        let x = MeasurementOp::new(b.mask().clone()).zero_fill(&b).unwrap();
        let mut config = SamplerConfig::new(small_schedule(), 21);
        config.dc_step = 0.0;
        let dc = sample_dc(&net, &x, &b, &config).unwrap();
        let plain = sample_plain(&net, &x, &config).unwrap();
        for (a, b) in dc.image.data().iter().zip(plain.data()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn full_mask_exact_step_recovers_truth() {
        let truth = phantom(16);
        let b = measurement(SamplingMask::full(16, 16), &truth, 0.0);
        let x = MeasurementOp::new(b.mask().clone()).zero_fill(&b).unwrap();
        let config = SamplerConfig::new(small_schedule(), 1);
        for out in [
            sample_dc(&random_network(), &x, &b, &config).unwrap(),
            sample_dc(&constant_predictor(3.0), &x, &b, &config).unwrap(),
        ] {
            for (a, t) in out.image.data().iter().zip(truth.data()) {
                assert!((a - t).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn every_correction_contracts_the_residual() {
        let net = random_network();
        let truth = phantom(16);
        let mask = gen_g1d(16, 16, 4.0, 8, &MaskParams::default()).unwrap();
        let b = measurement(mask, &truth, 0.02);
        let x = MeasurementOp::new(b.mask().clone()).zero_fill(&b).unwrap();
        for step in [0.0, 0.25, 0.5, 1.0] {
            let mut config = SamplerConfig::new(small_schedule(), 2);
            config.dc_step = step;
            config.record_trajectory = true;
            let out = sample_dc(&net, &x, &b, &config).unwrap();
            assert_eq!(out.residuals.len(), 12);
            let ts: Vec<usize> = out.residuals.iter().map(|r| r.t).collect();
            assert_eq!(ts, (1..=12).rev().collect::<Vec<_>>());
            for r in &out.residuals {
                assert!((r.after - (1.0 - step) * r.before).abs() < 1e-8 * r.before.max(1.0));
            }
        }
    }

    #[test]
    fn final_state_is_measurement_consistent() {
        let truth = phantom(16);
        let mask = gen_g1d(16, 16, 4.0, 3, &MaskParams::default()).unwrap();
        let b = measurement(mask, &truth, 0.0);
        let op = MeasurementOp::new(b.mask().clone());
        let x = op.zero_fill(&b).unwrap();
        let out = sample_dc(
            &random_network(),
            &x,
            &b,
            &SamplerConfig::new(small_schedule(), 6),
        )
        .unwrap();
        assert!(op.residual_norm_complex(&out.state, &b).unwrap() < 1e-8);
        assert_eq!(out.image, out.state.real());
        assert!(out.residuals.is_empty());
    }

    #[test]
    fn invalid_requests_rejected() {
        let truth = phantom(8);
        let b = measurement(SamplingMask::full(8, 8), &truth, 0.0);
        let mut config = SamplerConfig::new(small_schedule(), 0);
        let wrong = RealImage::zeros(8, 6);
        assert!(matches!(
            sample_dc(&zero_predictor(), &wrong, &b, &config),
            Err(Error::ShapeMismatch { .. })
        ));
        config.dc_step = 1.5;
        assert!(sample_dc(&zero_predictor(), &truth, &b, &config).is_err());
        assert!(sample_plain(&zero_predictor(), &truth, &config).is_err());
        config.dc_step = 1.0;
        config.enable_dc = false;
        assert!(sample_dc(&zero_predictor(), &truth, &b, &config).is_err());
    }

    #[test]
    fn report_echoes_configuration() {
        let truth = phantom(16);
        let mask = gen_g1d(16, 16, 4.0, 3, &MaskParams::default()).unwrap();
        let b = measurement(mask, &truth, 0.0);
        let mut config = SamplerConfig::new(small_schedule(), 17);
        config.dc_step = 0.5;
        let (image, report) = reconstruct(&zero_predictor(), &b, &config).unwrap();
        assert_eq!(image.shape(), (16, 16));
        assert_eq!(report.steps, 12);
        assert_eq!(report.timesteps, 12);
        assert_eq!(report.seed, 17);
        assert_eq!(report.dc_step, 0.5);
        assert_eq!(report.pattern.as_deref(), Some("g1d"));
        assert!(report.residuals.is_none());
        let doc: toml::Table = report.to_toml().parse().unwrap();
        assert_eq!(doc["steps"].as_integer(), Some(12));

        config.record_trajectory = true;
        let (_, report) = reconstruct(&zero_predictor(), &b, &config).unwrap();
        assert_eq!(report.residuals.as_ref().map(Vec::len), Some(12));
        let doc: toml::Table = report.to_toml().parse().unwrap();
        assert_eq!(doc["residuals"].as_array().map(Vec::len), Some(12));

        config.enable_dc = false;
        let (plain, report) = reconstruct(&zero_predictor(), &b, &config).unwrap();
        assert!(!report.enable_dc);
        let x = MeasurementOp::new(b.mask().clone()).zero_fill(&b).unwrap();
        assert_eq!(plain, sample_plain(&zero_predictor(), &x, &config).unwrap());
    }
}
