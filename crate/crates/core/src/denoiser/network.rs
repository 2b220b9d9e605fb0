use super::linalg::{col2im, gemm_nn, gemm_nt, gemm_tn, im2col, Scalar};
use super::{alpha_embedding, DenoiserParams, SegmentKind};
use crate::numerics::RealImage;

/// Activations kept from a forward pass for backpropagation.
#[derive(Debug, Default)]
pub struct ForwardCache<T> {
    height: usize,
    width: usize,
    embed: Vec<T>,
    /// Input of every hidden layer; entry 0 is the stacked `[x, y]` pair.
    inputs: Vec<Vec<T>>,
    pre: Vec<Vec<T>>,
    last_hidden: Vec<T>,
}

fn silu<T: Scalar>(x: T) -> T {
    x / (T::one() + (-x).exp())
}

fn silu_grad<T: Scalar>(x: T) -> T {
    let s = T::one() / (T::one() + (-x).exp());
    s * (T::one() + x * (T::one() - s))
}

/// Borrowed view of a parameter set that knows how to run it.
pub struct Network<'a, T> {
    params: &'a DenoiserParams<T>,
}

impl<'a, T: Scalar> Network<'a, T> {
    pub fn new(params: &'a DenoiserParams<T>) -> Self {
        Self { params }
    }

    fn effective_bias(&self, layer: usize, embed: &[T]) -> Vec<T> {
        let bias = self.params.segment(Some(layer), SegmentKind::Bias);
        let proj = self.params.segment(Some(layer), SegmentKind::Embed);
        let e = embed.len();
        bias.iter()
            .enumerate()
            .map(|(c, &b)| {
                proj[c * e..(c + 1) * e]
                    .iter()
                    .zip(embed)
                    .fold(b, |acc, (&p, &v)| acc + p * v)
            })
            .collect()
    }

    /// Predicted noise, flattened row-major. Fills `cache` when given.
    pub fn forward(
        &self,
        x_cond: &RealImage,
        y_noisy: &RealImage,
        alpha_bar: f64,
        mut cache: Option<&mut ForwardCache<T>>,
    ) -> Vec<T> {
        let cfg = *self.params.config();
        let (h, w) = x_cond.shape();
        let hw = h * w;
        let k = cfg.kernel;
        let embed: Vec<T> = alpha_embedding(alpha_bar, cfg.alpha_embed_dim)
            .into_iter()
            .map(T::of_f64)
            .collect();

        let mut input: Vec<T> = x_cond
            .data()
            .iter()
            .chain(y_noisy.data())
            .map(|&v| T::of_f64(v))
            .collect();
        let mut cols = Vec::new();
        if let Some(c) = cache.as_deref_mut() {
            c.height = h;
            c.width = w;
            c.embed = embed.clone();
            c.inputs.clear();
            c.pre.clear();
        }

        for layer in 0..cfg.depth {
            let cin = cfg.in_channels(layer);
            im2col(&input, cin, h, w, k, &mut cols);
            let mut pre = vec![T::zero(); cfg.width * hw];
            let weight = self.params.segment(Some(layer), SegmentKind::Weight);
            gemm_nn(cfg.width, cin * k * k, hw, weight, &cols, &mut pre, false);
            for (row, b) in pre.chunks_mut(hw).zip(self.effective_bias(layer, &embed)) {
                for v in row {
                    *v = *v + b;
                }
            }
            let out: Vec<T> = if layer == 0 {
                pre.iter().map(|&v| silu(v)).collect()
            } else {
                input.iter().zip(&pre).map(|(&i, &v)| i + silu(v)).collect()
            };
            if let Some(c) = cache.as_deref_mut() {
                c.inputs.push(std::mem::replace(&mut input, out));
                c.pre.push(pre);
            } else {
                input = out;
            }
        }

        im2col(&input, cfg.width, h, w, k, &mut cols);
        let mut out = vec![T::zero(); hw];
        let weight = self.params.segment(None, SegmentKind::Weight);
        gemm_nn(1, cfg.width * k * k, hw, weight, &cols, &mut out, false);
        let bias = self.params.segment(None, SegmentKind::Bias)[0];
        for v in &mut out {
            *v = *v + bias;
        }
        if let Some(c) = cache {
            c.last_hidden = input;
        }
        out
    }

    /// Accumulates `d loss / d params` into `grads` given `d loss / d output`.
    pub fn backward(&self, cache: &ForwardCache<T>, grad_out: &[T], grads: &mut DenoiserParams<T>) {
        let cfg = *self.params.config();
        let (h, w) = (cache.height, cache.width);
        let hw = h * w;
        let k = cfg.kernel;
        let k2 = k * k;
        let layout = self.params.layout().clone();
        let mut cols = Vec::new();

        im2col(&cache.last_hidden, cfg.width, h, w, k, &mut cols);
        let range = layout.range(None, SegmentKind::Weight);
        gemm_nt(
            1,
            hw,
            cfg.width * k2,
            grad_out,
            &cols,
            &mut grads.data_mut()[range],
            true,
        );
        let range = layout.range(None, SegmentKind::Bias);
        let gb = grad_out.iter().fold(T::zero(), |a, &g| a + g);
        grads.data_mut()[range.start] = grads.data_mut()[range.start] + gb;

        let mut dcols = vec![T::zero(); cfg.width * k2 * hw];
        let w_out = self.params.segment(None, SegmentKind::Weight);
        gemm_tn(cfg.width * k2, 1, hw, w_out, grad_out, &mut dcols, false);
        let mut grad_h = vec![T::zero(); cfg.width * hw];
        col2im(&dcols, cfg.width, h, w, k, &mut grad_h);

        let e = cache.embed.len();
        let mut grad_in = vec![T::zero(); cfg.width * hw];
        for layer in (0..cfg.depth).rev() {
            let cin = cfg.in_channels(layer);
            let grad_pre: Vec<T> = grad_h
                .iter()
                .zip(&cache.pre[layer])
                .map(|(&g, &p)| g * silu_grad(p))
                .collect();

            im2col(&cache.inputs[layer], cin, h, w, k, &mut cols);
            let range = layout.range(Some(layer), SegmentKind::Weight);
            gemm_nt(
                cfg.width,
                hw,
                cin * k2,
                &grad_pre,
                &cols,
                &mut grads.data_mut()[range],
                true,
            );

            let bias_range = layout.range(Some(layer), SegmentKind::Bias);
            let embed_range = layout.range(Some(layer), SegmentKind::Embed);
            for (c, row) in grad_pre.chunks(hw).enumerate() {
                let gb = row.iter().fold(T::zero(), |a, &g| a + g);
                let data = grads.data_mut();
                data[bias_range.start + c] = data[bias_range.start + c] + gb;
                for (j, &v) in cache.embed.iter().enumerate() {
                    let idx = embed_range.start + c * e + j;
                    data[idx] = data[idx] + gb * v;
                }
            }

            if layer > 0 {
                dcols.resize(cin * k2 * hw, T::zero());
                let weight = self.params.segment(Some(layer), SegmentKind::Weight);
                gemm_tn(
                    cin * k2,
                    cfg.width,
                    hw,
                    weight,
                    &grad_pre,
                    &mut dcols,
                    false,
                );
                col2im(&dcols, cin, h, w, k, &mut grad_in);
                for (g, &d) in grad_h.iter_mut().zip(&grad_in) {
                    *g = *g + d;
                }
            }
        }
    }
}
