//! Conditional noise predictor `f(x, y_noisy, alpha_bar) -> eps` and its
//! supervised training loop.
//!
//! The network is a residual stack of same-padded convolutions:
//!
//! ```text
//! h_0 = silu(conv_0([x, y]) + b_0 + P_0 e(alpha_bar))
//! h_l = h_{l-1} + silu(conv_l(h_{l-1}) + b_l + P_l e(alpha_bar))   l = 1..depth
//! eps = conv_out(h_{depth-1}) + b_out
//! ```
//!
//! where `e` is a sinusoidal embedding of the log noise level. The output
//! convolution starts at zero, so a fresh network predicts zero noise.

mod linalg;
mod network;
mod train;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{RandomSource, RealImage};

pub use linalg::Scalar;
pub use network::{ForwardCache, Network};
pub use train::{
    loss_and_grad, loss_and_grad_fixed, train, AdamParams, TrainState, TrainerConfig, TrainingDraw,
    TrainingPair,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DenoiserConfig {
    pub depth: usize,
    pub width: usize,
    pub kernel: usize,
    pub p_norm: u8,
    pub alpha_embed_dim: usize,
}

impl Default for DenoiserConfig {
    fn default() -> Self {
        Self {
            depth: 6,
            width: 32,
            kernel: 3,
            p_norm: 2,
            alpha_embed_dim: 16,
        }
    }
}

impl DenoiserConfig {
    pub fn validate(&self) -> Result<()> {
        if self.depth == 0 {
            return Err(Error::invalid("depth", "must be at least 1"));
        }
        if self.width == 0 {
            return Err(Error::invalid("width", "must be at least 1"));
        }
        if self.kernel.is_multiple_of(2) {
            return Err(Error::invalid(
                "kernel",
                format!("{} must be odd", self.kernel),
            ));
        }
        if !matches!(self.p_norm, 1 | 2) {
            return Err(Error::invalid(
                "p_norm",
                format!("{} must be 1 or 2", self.p_norm),
            ));
        }
        if self.alpha_embed_dim == 0 {
            return Err(Error::invalid("alpha_embed_dim", "must be at least 1"));
        }
        Ok(())
    }

    fn in_channels(&self, layer: usize) -> usize {
        if layer == 0 {
            2
        } else {
            self.width
        }
    }
}

/// Which tensor of which layer a parameter segment holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SegmentKind {
    Weight,
    Bias,
    Embed,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segment {
    pub name: String,
    /// `None` for the output layer.
    pub layer: Option<usize>,
    pub kind: SegmentKind,
    pub shape: Vec<usize>,
    pub offset: usize,
    pub len: usize,
}

/// Placement of every parameter tensor inside one flat buffer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    segments: Vec<Segment>,
    total: usize,
}

impl Layout {
    pub fn new(config: &DenoiserConfig) -> Self {
        let mut segments = Vec::new();
        let mut offset = 0;
        let mut push = |name: String, layer, kind, shape: Vec<usize>| {
            let len = shape.iter().product();
            segments.push(Segment {
                name,
                layer,
                kind,
                shape,
                offset,
                len,
            });
            offset += len;
        };
        let (k, w, e) = (config.kernel, config.width, config.alpha_embed_dim);
        for l in 0..config.depth {
            let cin = config.in_channels(l);
            push(
                format!("conv{l}.weight"),
                Some(l),
                SegmentKind::Weight,
                vec![w, cin, k, k],
            );
            push(format!("conv{l}.bias"), Some(l), SegmentKind::Bias, vec![w]);
            push(
                format!("conv{l}.embed"),
                Some(l),
                SegmentKind::Embed,
                vec![w, e],
            );
        }
        push(
            "out.weight".into(),
            None,
            SegmentKind::Weight,
            vec![1, w, k, k],
        );
        push("out.bias".into(), None, SegmentKind::Bias, vec![1]);
        let total = offset;
        Self { segments, total }
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn total(&self) -> usize {
        self.total
    }

    fn find(&self, layer: Option<usize>, kind: SegmentKind) -> &Segment {
        self.segments
            .iter()
            .find(|s| s.layer == layer && s.kind == kind)
            .expect("segment present in layout")
    }

    pub fn range(&self, layer: Option<usize>, kind: SegmentKind) -> std::ops::Range<usize> {
        let s = self.find(layer, kind);
        s.offset..s.offset + s.len
    }
}

/// All network weights in one flat buffer addressed through a [`Layout`].
///
/// Gradients share the type, so optimizer and finite-difference code work on
/// plain slices.
#[derive(Debug, Clone, PartialEq)]
pub struct DenoiserParams<T = f32> {
    config: DenoiserConfig,
    layout: Layout,
    data: Vec<T>,
}

impl<T: Scalar> DenoiserParams<T> {
    pub fn zeros(config: DenoiserConfig) -> Result<Self> {
        config.validate()?;
        let layout = Layout::new(&config);
        let data = vec![T::zero(); layout.total()];
        Ok(Self {
            config,
            layout,
            data,
        })
    }

    /// Fan-in scaled uniform weights; the output convolution starts at zero.
    pub fn init(config: DenoiserConfig, rng: &mut RandomSource) -> Result<Self> {
        let mut params = Self::zeros(config)?;
        let k2 = config.kernel * config.kernel;
        for seg in params.layout.segments.clone() {
            let Some(layer) = seg.layer else { continue };
            let bound = match seg.kind {
                SegmentKind::Weight | SegmentKind::Bias => {
                    1.0 / ((config.in_channels(layer) * k2) as f64).sqrt()
                }
                SegmentKind::Embed => 1.0 / (config.alpha_embed_dim as f64).sqrt(),
            };
            for v in &mut params.data[seg.offset..seg.offset + seg.len] {
                *v = T::of_f64(rng.uniform_range(-bound, bound));
            }
        }
        Ok(params)
    }

    pub fn from_data(config: DenoiserConfig, data: Vec<T>) -> Result<Self> {
        let mut params = Self::zeros(config)?;
        if data.len() != params.data.len() {
            return Err(Error::invalid(
                "params",
                format!(
                    "{} values for a layout of {}",
                    data.len(),
                    params.data.len()
                ),
            ));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("denoiser params"));
        }
        params.data = data;
        Ok(params)
    }

    pub fn config(&self) -> &DenoiserConfig {
        &self.config
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn segment(&self, layer: Option<usize>, kind: SegmentKind) -> &[T] {
        &self.data[self.layout.range(layer, kind)]
    }

    pub fn cast<U: Scalar>(&self) -> DenoiserParams<U> {
        DenoiserParams {
            config: self.config,
            layout: self.layout.clone(),
            data: self.data.iter().map(|v| U::of_f64(v.as_f64())).collect(),
        }
    }

    /// Same-shaped buffer of zeros, used for gradients and optimizer moments.
    pub fn zeros_like(&self) -> Self {
        Self {
            config: self.config,
            layout: self.layout.clone(),
            data: vec![T::zero(); self.data.len()],
        }
    }
}

/// Sinusoidal features of `log sqrt(1 - alpha_bar)`.
///
/// Frequencies are geometric, `2^(j - d/4)` for `j < d/2`; an odd dimension
/// appends the scaled log level itself.
pub fn alpha_embedding(alpha_bar: f64, dim: usize) -> Vec<f64> {
    let level = 0.5 * (1.0 - alpha_bar).max(1e-8).ln();
    let pairs = dim / 2;
    let mut out = Vec::with_capacity(dim);
    for j in 0..pairs {
        let freq = 2f64.powf(j as f64 - dim as f64 / 4.0);
        out.push((freq * level).sin());
        out.push((freq * level).cos());
    }
    if dim % 2 == 1 {
        out.push(level / 10.0);
    }
    out
}

/// Anything that maps `(x_cond, y_noisy, alpha_bar)` to a noise estimate.
pub trait NoisePredictor: Sync {
    fn predict_noise(
        &self,
        x_cond: &RealImage,
        y_noisy: &RealImage,
        alpha_bar: f64,
    ) -> Result<RealImage>;
}

impl<T: Scalar> NoisePredictor for DenoiserParams<T> {
    fn predict_noise(
        &self,
        x_cond: &RealImage,
        y_noisy: &RealImage,
        alpha_bar: f64,
    ) -> Result<RealImage> {
        predict_noise(self, x_cond, y_noisy, alpha_bar)
    }
}

impl<F> NoisePredictor for F
where
    F: Fn(&RealImage, &RealImage, f64) -> RealImage + Sync,
{
    fn predict_noise(
        &self,
        x_cond: &RealImage,
        y_noisy: &RealImage,
        alpha_bar: f64,
    ) -> Result<RealImage> {
        x_cond.ensure_same_shape(y_noisy)?;
        Ok(self(x_cond, y_noisy, alpha_bar))
    }
}

fn check_inputs(x_cond: &RealImage, y_noisy: &RealImage, alpha_bar: f64) -> Result<()> {
    x_cond.ensure_same_shape(y_noisy)?;
    if !(alpha_bar > 0.0 && alpha_bar <= 1.0) {
        return Err(Error::invalid(
            "alpha_bar",
            format!("{alpha_bar} outside (0, 1]"),
        ));
    }
    Ok(())
}

/// Runs the network once; output has the shape of the inputs.
pub fn predict_noise<T: Scalar>(
    params: &DenoiserParams<T>,
    x_cond: &RealImage,
    y_noisy: &RealImage,
    alpha_bar: f64,
) -> Result<RealImage> {
    check_inputs(x_cond, y_noisy, alpha_bar)?;
    let (h, w) = x_cond.shape();
    let net = Network::new(params);
    let out = net.forward(x_cond, y_noisy, alpha_bar, None);
    RealImage::new(h, w, out.iter().map(|v| v.as_f64()).collect())
}
