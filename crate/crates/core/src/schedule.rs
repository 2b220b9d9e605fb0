//! Variance schedules, closed-form forward diffusion and the tractable
//! posterior `q(y_{t-1} | y_t, y_0)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{RandomSource, RealImage};

/// Reference timestep count that the default beta endpoints are quoted for.
pub const REFERENCE_TIMESTEPS: usize = 2000;
pub const DEFAULT_BETA_START: f64 = 1e-4;
pub const DEFAULT_BETA_END: f64 = 0.02;

/// Serializable schedule description (config keys).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleParams {
    pub timesteps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
}

impl Default for ScheduleParams {
    fn default() -> Self {
        Self {
            timesteps: REFERENCE_TIMESTEPS,
            beta_start: DEFAULT_BETA_START,
            beta_end: DEFAULT_BETA_END,
        }
    }
}

impl ScheduleParams {
    /// Default endpoints scaled by `2000 / timesteps`, so a shorter chain
    /// reaches a comparable terminal `alpha_bar`.
    pub fn rescaled(timesteps: usize) -> Self {
        let factor = REFERENCE_TIMESTEPS as f64 / timesteps as f64;
        Self {
            timesteps,
            beta_start: DEFAULT_BETA_START * factor,
            beta_end: DEFAULT_BETA_END * factor,
        }
    }

    pub fn build(&self) -> Result<NoiseSchedule> {
        NoiseSchedule::linear(self.timesteps, self.beta_start, self.beta_end)
    }
}

/// `beta_t`, `alpha_t = 1 - beta_t` and `alpha_bar_t = prod_{n<=t} alpha_n`.
///
/// Indexing is 1-based for `beta`/`alpha` (`t` in `1..=T`); `alpha_bar` is
/// defined on `0..=T` with `alpha_bar_0 = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    betas: Vec<f64>,
    alphas: Vec<f64>,
    alpha_bars: Vec<f64>,
    // 1 - alpha_bar_t via (1 - alpha_bar_{t-1}) + alpha_bar_{t-1} beta_t, exact at t = 1.
    one_minus_alpha_bars: Vec<f64>,
}

impl NoiseSchedule {
    pub fn from_betas(betas: Vec<f64>) -> Result<Self> {
        if betas.is_empty() {
            return Err(Error::invalid("timesteps", "must be at least 1"));
        }
        if betas.iter().any(|b| !(*b > 0.0 && *b < 1.0)) {
            return Err(Error::invalid("beta", "every beta must lie in (0, 1)"));
        }
        if betas.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::invalid("beta", "betas must be non-decreasing"));
        }
        let alphas: Vec<f64> = betas.iter().map(|b| 1.0 - b).collect();
        let mut alpha_bars = Vec::with_capacity(betas.len() + 1);
        let mut one_minus_alpha_bars = Vec::with_capacity(betas.len() + 1);
        alpha_bars.push(1.0);
        one_minus_alpha_bars.push(0.0);
        for (a, b) in alphas.iter().zip(&betas) {
            let prev = *alpha_bars.last().unwrap();
            let prev_c = *one_minus_alpha_bars.last().unwrap();
            alpha_bars.push(prev * a);
            one_minus_alpha_bars.push(prev_c + prev * b);
        }
        if alpha_bars
            .windows(2)
            .any(|w| w[1].partial_cmp(&w[0]) != Some(std::cmp::Ordering::Less))
            || *alpha_bars.last().unwrap() <= 0.0
        {
            return Err(Error::invalid(
                "beta",
                "alpha_bar must stay positive and strictly decreasing",
            ));
        }
        Ok(Self {
            betas,
            alphas,
            alpha_bars,
            one_minus_alpha_bars,
        })
    }

    /// Betas linearly interpolated from `beta_start` to `beta_end` inclusive.
    pub fn linear(timesteps: usize, beta_start: f64, beta_end: f64) -> Result<Self> {
        if timesteps == 0 {
            return Err(Error::invalid("timesteps", "must be at least 1"));
        }
        if !(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0) {
            return Err(Error::invalid(
                "beta",
                format!("need 0 < beta_start <= beta_end < 1, got {beta_start}..{beta_end}"),
            ));
        }
        let betas = if timesteps == 1 {
            vec![beta_start]
        } else {
            let step = (beta_end - beta_start) / (timesteps - 1) as f64;
            (0..timesteps)
                .map(|i| {
                    if i == timesteps - 1 {
                        beta_end
                    } else {
                        beta_start + step * i as f64
                    }
                })
                .collect()
        };
        Self::from_betas(betas)
    }

    pub fn timesteps(&self) -> usize {
        self.betas.len()
    }

    pub fn beta(&self, t: usize) -> f64 {
        self.betas[t - 1]
    }

    pub fn alpha(&self, t: usize) -> f64 {
        self.alphas[t - 1]
    }

    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bars[t]
    }

    /// `1 - alpha_bar_t`, accumulated without cancellation.
    pub fn one_minus_alpha_bar(&self, t: usize) -> f64 {
        self.one_minus_alpha_bars[t]
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bars
    }

    fn check_t(&self, t: usize) -> Result<()> {
        if t == 0 || t > self.timesteps() {
            return Err(Error::invalid(
                "t",
                format!("{t} outside 1..={}", self.timesteps()),
            ));
        }
        Ok(())
    }

    /// `sqrt(alpha_bar_t) y0 + sqrt(1 - alpha_bar_t) eps`.
    pub fn forward_diffuse(&self, y0: &RealImage, t: usize, eps: &RealImage) -> Result<RealImage> {
        self.check_t(t)?;
        y0.ensure_same_shape(eps)?;
        let (s, n) = (self.alpha_bar(t).sqrt(), self.one_minus_alpha_bar(t).sqrt());
        Ok(y0.zip_map(eps, |a, e| s * a + n * e))
    }

    /// One draw from `p(alpha_bar) = sum_t (1/T) U(alpha_bar_t, alpha_bar_{t-1})`.
    ///
    /// Returns the continuous level and the interval index `t` it fell in.
    pub fn sample_alpha_bar(&self, rng: &mut RandomSource) -> (f64, usize) {
        let t = rng.below(self.timesteps()) + 1;
        let (lo, hi) = (self.alpha_bar(t), self.alpha_bar(t - 1));
        let mut value = rng.uniform_range(lo, hi);
        // Keep the draw inside the open interval.
        if value <= lo {
            value = 0.5 * (lo + hi);
        }
        (value, t)
    }

    /// Mean and variance of `q(y_{t-1} | y_t, y_0)`.
    pub fn posterior_params(
        &self,
        y0: &RealImage,
        yt: &RealImage,
        t: usize,
    ) -> Result<(RealImage, f64)> {
        self.check_t(t)?;
        y0.ensure_same_shape(yt)?;
        let (c_t, c_0, sigma2) = self.posterior_coefficients(t);
        Ok((yt.zip_map(y0, |a, b| c_t * a + c_0 * b), sigma2))
    }

    /// `(coefficient of y_t, coefficient of y_0, variance)` of the posterior.
    pub fn posterior_coefficients(&self, t: usize) -> (f64, f64, f64) {
        let alpha = self.alpha(t);
        let beta = self.beta(t);
        let ab_prev = self.alpha_bar(t - 1);
        let denom = self.one_minus_alpha_bar(t);
        let prev_c = self.one_minus_alpha_bar(t - 1);
        (
            alpha.sqrt() * prev_c / denom,
            ab_prev.sqrt() * beta / denom,
            beta * prev_c / denom,
        )
    }
}

/// Noisy image at a continuous signal level `alpha_bar`.
pub fn diffuse_at(y0: &RealImage, alpha_bar: f64, eps: &RealImage) -> Result<RealImage> {
    y0.ensure_same_shape(eps)?;
    if !(alpha_bar > 0.0 && alpha_bar <= 1.0) {
        return Err(Error::invalid(
            "alpha_bar",
            format!("{alpha_bar} outside (0, 1]"),
        ));
    }
    let (s, n) = (alpha_bar.sqrt(), (1.0 - alpha_bar).sqrt());
    Ok(y0.zip_map(eps, |a, e| s * a + n * e))
}
