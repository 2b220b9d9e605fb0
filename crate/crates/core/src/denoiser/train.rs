use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::linalg::Scalar;
use super::network::{ForwardCache, Network};
use super::DenoiserParams;
use crate::error::{Error, Result};
use crate::numerics::{gaussian_image, RandomSource, RealImage};
use crate::schedule::{diffuse_at, NoiseSchedule};

/// One supervised example: zero-filled condition `x` and ground truth `y0`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingPair {
    pub condition: RealImage,
    pub truth: RealImage,
}

/// The random part of one training term: noise level and noise image.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingDraw {
    pub alpha_bar: f64,
    pub eps: RealImage,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamParams {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainerConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Train on random square crops of this size instead of whole images.
    /// The network is fully convolutional, so crops are valid inputs.
    pub crop_size: Option<usize>,
    pub adam: AdamParams,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            batch_size: 8,
            epochs: 20,
            seed: 0,
            crop_size: None,
            adam: AdamParams::default(),
        }
    }
}

impl TrainerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::invalid("learning_rate", "must be positive"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size", "must be at least 1"));
        }
        if self.crop_size == Some(0) {
            return Err(Error::invalid("crop_size", "must be at least 1"));
        }
        let a = self.adam;
        if !((0.0..1.0).contains(&a.beta1) && (0.0..1.0).contains(&a.beta2) && a.epsilon > 0.0) {
            return Err(Error::invalid(
                "adam",
                "need beta1, beta2 in [0, 1) and epsilon > 0",
            ));
        }
        Ok(())
    }
}

/// Optimizer state owned by a single trainer.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub params: DenoiserParams<f32>,
    pub step_count: u64,
    pub first_moment: Vec<f32>,
    pub second_moment: Vec<f32>,
    pub learning_rate: f64,
    pub adam: AdamParams,
    /// Mean training loss of every completed epoch.
    pub epoch_losses: Vec<f64>,
}

impl TrainState {
    pub fn new(params: DenoiserParams<f32>, learning_rate: f64, adam: AdamParams) -> Self {
        let n = params.len();
        Self {
            params,
            step_count: 0,
            first_moment: vec![0.0; n],
            second_moment: vec![0.0; n],
            learning_rate,
            adam,
            epoch_losses: Vec::new(),
        }
    }

    /// One bias-corrected adaptive-moment update.
    pub fn apply_gradients(&mut self, grads: &DenoiserParams<f32>) {
        self.step_count += 1;
        let AdamParams {
            beta1,
            beta2,
            epsilon,
        } = self.adam;
        let t = self.step_count as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        let lr = self.learning_rate;
        for (((p, &g), m), v) in self
            .params
            .data_mut()
            .iter_mut()
            .zip(grads.data())
            .zip(&mut self.first_moment)
            .zip(&mut self.second_moment)
        {
            let g = g as f64;
            let m_new = beta1 * *m as f64 + (1.0 - beta1) * g;
            let v_new = beta2 * *v as f64 + (1.0 - beta2) * g * g;
            *m = m_new as f32;
            *v = v_new as f32;
            let update = lr * (m_new / c1) / ((v_new / c2).sqrt() + epsilon);
            *p = (*p as f64 - update) as f32;
        }
    }
}

fn item_loss_and_grad<T: Scalar>(
    params: &DenoiserParams<T>,
    pair: &TrainingPair,
    draw: &TrainingDraw,
    p_norm: u8,
    weight: f64,
) -> Result<(f64, DenoiserParams<T>)> {
    pair.condition.ensure_same_shape(&pair.truth)?;
    let noisy = diffuse_at(&pair.truth, draw.alpha_bar, &draw.eps)?;
    let net = Network::new(params);
    let mut cache = ForwardCache::default();
    let out = net.forward(&pair.condition, &noisy, draw.alpha_bar, Some(&mut cache));
    let mut loss = 0.0;
    let grad_out: Vec<T> = out
        .iter()
        .zip(draw.eps.data())
        .map(|(&o, &e)| {
            let d = o.as_f64() - e;
            if p_norm == 1 {
                loss += d.abs();
                let s = if d > 0.0 {
                    1.0
                } else if d < 0.0 {
                    -1.0
                } else {
                    0.0
                };
                T::of_f64(weight * s)
            } else {
                loss += d * d;
                T::of_f64(weight * 2.0 * d)
            }
        })
        .collect();
    let mut grads = params.zeros_like();
    net.backward(&cache, &grad_out, &mut grads);
    Ok((loss, grads))
}

/// Batch-mean loss `||f(x, sqrt(a) y0 + sqrt(1-a) eps, a) - eps||_p^p` and its
/// exact gradient for fixed draws.
///
/// Items are evaluated in parallel and reduced in batch order, so the result
/// does not depend on thread scheduling.
pub fn loss_and_grad_fixed<T: Scalar>(
    params: &DenoiserParams<T>,
    batch: &[&TrainingPair],
    draws: &[TrainingDraw],
    p_norm: u8,
) -> Result<(f64, DenoiserParams<T>)> {
    if batch.is_empty() {
        return Err(Error::invalid("batch", "must not be empty"));
    }
    if batch.len() != draws.len() {
        return Err(Error::invalid("draws", "one draw per batch item required"));
    }
    if !matches!(p_norm, 1 | 2) {
        return Err(Error::invalid("p_norm", format!("{p_norm} must be 1 or 2")));
    }
    let weight = 1.0 / batch.len() as f64;
    let terms: Vec<Result<(f64, DenoiserParams<T>)>> = batch
        .par_iter()
        .zip(draws.par_iter())
        .map(|(pair, draw)| item_loss_and_grad(params, pair, draw, p_norm, weight))
        .collect();
    let mut loss = 0.0;
    let mut grads = params.zeros_like();
    for term in terms {
        let (l, g) = term?;
        loss += l * weight;
        for (acc, v) in grads.data_mut().iter_mut().zip(g.data()) {
            *acc = *acc + *v;
        }
    }
    Ok((loss, grads))
}

/// Draws `(alpha_bar, eps)` per item, then evaluates [`loss_and_grad_fixed`].
pub fn loss_and_grad<T: Scalar>(
    params: &DenoiserParams<T>,
    batch: &[&TrainingPair],
    schedule: &NoiseSchedule,
    rng: &mut RandomSource,
    p_norm: u8,
) -> Result<(f64, DenoiserParams<T>)> {
    if batch.is_empty() {
        return Err(Error::invalid("batch", "must not be empty"));
    }
    let draws: Vec<TrainingDraw> = batch
        .iter()
        .map(|pair| {
            let (alpha_bar, _) = schedule.sample_alpha_bar(rng);
            let (h, w) = pair.truth.shape();
            TrainingDraw {
                alpha_bar,
                eps: gaussian_image(rng, h, w),
            }
        })
        .collect();
    loss_and_grad_fixed(params, batch, &draws, p_norm)
}

fn crop(img: &RealImage, top: usize, left: usize, h: usize, w: usize) -> RealImage {
    RealImage::from_fn(h, w, |r, c| img.get(top + r, left + c))
}

/// The same window of condition and truth; images no larger than `size`
/// along an axis are kept whole along it.
fn random_crop(pair: &TrainingPair, size: usize, rng: &mut RandomSource) -> Result<TrainingPair> {
    pair.condition.ensure_same_shape(&pair.truth)?;
    let (h, w) = pair.truth.shape();
    let (ch, cw) = (size.min(h), size.min(w));
    let top = rng.below(h - ch + 1);
    let left = rng.below(w - cw + 1);
    Ok(TrainingPair {
        condition: crop(&pair.condition, top, left, ch, cw),
        truth: crop(&pair.truth, top, left, ch, cw),
    })
}

/// Runs `config.epochs` passes over `dataset` in shuffled mini-batches.
///
/// `on_epoch(epoch, mean_loss)` is called after each pass.
pub fn train(
    state: TrainState,
    dataset: &[TrainingPair],
    schedule: &NoiseSchedule,
    config: &TrainerConfig,
    rng: &mut RandomSource,
    mut on_epoch: impl FnMut(usize, f64),
) -> Result<TrainState> {
    if dataset.is_empty() {
        return Err(Error::invalid("dataset", "must not be empty"));
    }
    config.validate()?;
    let mut state = state;
    let p_norm = state.params.config().p_norm;
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    for epoch in 0..config.epochs {
        for i in (1..order.len()).rev() {
            let j = rng.below(i + 1);
            order.swap(i, j);
        }
        let mut total = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let cropped: Vec<TrainingPair>;
            let batch: Vec<&TrainingPair> = match config.crop_size {
                None => chunk.iter().map(|&i| &dataset[i]).collect(),
                Some(size) => {
                    cropped = chunk
                        .iter()
                        .map(|&i| random_crop(&dataset[i], size, rng))
                        .collect::<Result<_>>()?;
                    cropped.iter().collect()
                }
            };
            let (loss, grads) = loss_and_grad(&state.params, &batch, schedule, rng, p_norm)?;
            if !loss.is_finite() {
                return Err(Error::NonFinite("training loss"));
            }
            total += loss * batch.len() as f64;
            state.apply_gradients(&grads);
        }
        let mean = total / dataset.len() as f64;
        state.epoch_losses.push(mean);
        on_epoch(epoch, mean);
    }
    Ok(state)
}
