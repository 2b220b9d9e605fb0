//! Image-quality metrics and batch aggregation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::RealImage;

pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SsimWindow {
    /// 7x7 box window with sample (n - 1) covariance normalization.
    Uniform,
    /// 11x11 Gaussian window, sigma 1.5, population covariance.
    Gaussian,
}

/// Intensity span used by both metrics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataRange {
    /// `max - min` of the reference image.
    Reference,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricConfig {
    pub data_range: DataRange,
    pub window: SsimWindow,
}

impl Default for MetricConfig {
    fn default() -> Self {
        Self {
            data_range: DataRange::Reference,
            window: SsimWindow::Uniform,
        }
    }
}

impl MetricConfig {
    pub fn resolve_range(&self, reference: &RealImage) -> Result<f64> {
        let range = match self.data_range {
            DataRange::Reference => {
                let (lo, hi) = reference.min_max();
                hi - lo
            }
            DataRange::Fixed(r) => r,
        };
        check_range(range)?;
        Ok(range)
    }
}

fn check_range(range: f64) -> Result<()> {
    if !(range.is_finite() && range > 0.0) {
        return Err(Error::invalid(
            "data_range",
            format!("{range} must be positive"),
        ));
    }
    Ok(())
}

/// `10 log10(range^2 / mse)`, or `+inf` when the images are identical.
pub fn psnr(reference: &RealImage, test: &RealImage, data_range: f64) -> Result<f64> {
    reference.ensure_same_shape(test)?;
    check_range(data_range)?;
    let mse = reference
        .data()
        .iter()
        .zip(test.data())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / reference.len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (data_range * data_range / mse).log10())
}

fn window_taps(window: SsimWindow) -> (Vec<f64>, f64) {
    match window {
        SsimWindow::Uniform => {
            let n = 7;
            let np = (n * n) as f64;
            (vec![1.0 / n as f64; n], np / (np - 1.0))
        }
        SsimWindow::Gaussian => {
            let sigma: f64 = 1.5;
            let taps: Vec<f64> = (-5i32..=5)
                .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
                .collect();
            let total: f64 = taps.iter().sum();
            (taps.into_iter().map(|v| v / total).collect(), 1.0)
        }
    }
}

/// Mean local SSIM over every window position that lies fully inside the
/// image.
pub fn ssim(
    reference: &RealImage,
    test: &RealImage,
    data_range: f64,
    window: SsimWindow,
) -> Result<f64> {
    reference.ensure_same_shape(test)?;
    check_range(data_range)?;
    let (taps, cov_norm) = window_taps(window);
    let k = taps.len();
    let (h, w) = reference.shape();
    if h < k || w < k {
        return Err(Error::invalid(
            "image",
            format!("{h}x{w} is smaller than the {k}x{k} window"),
        ));
    }
    let c1 = (SSIM_K1 * data_range).powi(2);
    let c2 = (SSIM_K2 * data_range).powi(2);
    let (x, y) = (reference.data(), test.data());
    let mut total = 0.0;
    for r0 in 0..=h - k {
        for c0 in 0..=w - k {
            let (mut mx, mut my, mut mxx, mut myy, mut mxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for (i, wr) in taps.iter().enumerate() {
                let row = (r0 + i) * w + c0;
                for (j, wc) in taps.iter().enumerate() {
                    let wt = wr * wc;
                    let (a, b) = (x[row + j], y[row + j]);
                    mx += wt * a;
                    my += wt * b;
                    mxx += wt * a * a;
                    myy += wt * b * b;
                    mxy += wt * a * b;
                }
            }
            let vx = cov_norm * (mxx - mx * mx);
            let vy = cov_norm * (myy - my * my);
            let vxy = cov_norm * (mxy - mx * my);
            total += ((2.0 * mx * my + c1) * (2.0 * vxy + c2))
                / ((mx * mx + my * my + c1) * (vx + vy + c2));
        }
    }
    Ok(total / ((h - k + 1) * (w - k + 1)) as f64)
}

/// Per-image scores with mean and population standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub count: usize,
    pub psnr_mean: f64,
    pub psnr_std: f64,
    pub ssim_mean: f64,
    pub ssim_std: f64,
    pub psnr: Vec<f64>,
    pub ssim: Vec<f64>,
}

impl MetricReport {
    pub fn from_scores(psnr: Vec<f64>, ssim: Vec<f64>) -> Result<Self> {
        if psnr.is_empty() || psnr.len() != ssim.len() {
            return Err(Error::invalid(
                "scores",
                "need equal, non-empty score lists",
            ));
        }
        let (psnr_mean, psnr_std) = mean_std(&psnr);
        let (ssim_mean, ssim_std) = mean_std(&ssim);
        Ok(Self {
            count: psnr.len(),
            psnr_mean,
            psnr_std,
            ssim_mean,
            ssim_std,
            psnr,
            ssim,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("report fields are plain values")
    }
}

/// Mean and population standard deviation. Infinite entries (perfect PSNR)
/// give an infinite mean; the spread is zero only if every entry is infinite.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let infinite = values.iter().filter(|v| v.is_infinite()).count();
    if infinite > 0 {
        let std = if infinite == values.len() {
            0.0
        } else {
            f64::INFINITY
        };
        return (f64::INFINITY, std);
    }
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Scores every `(reference, test)` pair.
pub fn evaluate_batch(
    pairs: &[(RealImage, RealImage)],
    config: &MetricConfig,
) -> Result<MetricReport> {
    if pairs.is_empty() {
        return Err(Error::invalid("pairs", "must not be empty"));
    }
    let mut p = Vec::with_capacity(pairs.len());
    let mut s = Vec::with_capacity(pairs.len());
    for (reference, test) in pairs {
        let range = config.resolve_range(reference)?;
        p.push(psnr(reference, test, range)?);
        s.push(ssim(reference, test, range, config.window)?);
    }
    MetricReport::from_scores(p, s)
}
