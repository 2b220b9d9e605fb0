//! Single-coil measurement operator `A = P F` and the data-consistency step.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::masks::SamplingMask;
use crate::numerics::{dft2_centered, idft2_centered, ComplexImage, RandomSource, RealImage};

/// Masked k-space data `b`. Entries outside the mask are exactly zero.
#[derive(Debug, Clone, PartialEq)]
pub struct KSpaceMeasurement {
    kdata: ComplexImage,
    mask: SamplingMask,
    noise_std: f64,
}

impl KSpaceMeasurement {
    /// Wraps existing k-space data; unsampled entries are zeroed.
    pub fn new(kdata: ComplexImage, mask: SamplingMask, noise_std: f64) -> Result<Self> {
        if kdata.shape() != mask.shape() {
            return Err(Error::ShapeMismatch {
                expected: mask.shape(),
                actual: kdata.shape(),
            });
        }
        if !(noise_std.is_finite() && noise_std >= 0.0) {
            return Err(Error::invalid(
                "noise_std",
                format!("{noise_std} must be >= 0"),
            ));
        }
        let mut kdata = kdata;
        apply_mask(&mut kdata, &mask);
        Ok(Self {
            kdata,
            mask,
            noise_std,
        })
    }

    pub fn kdata(&self) -> &ComplexImage {
        &self.kdata
    }

    pub fn mask(&self) -> &SamplingMask {
        &self.mask
    }

    pub fn noise_std(&self) -> f64 {
        self.noise_std
    }

    pub fn shape(&self) -> (usize, usize) {
        self.kdata.shape()
    }
}

fn apply_mask(k: &mut ComplexImage, mask: &SamplingMask) {
    for (v, &keep) in k.data_mut().iter_mut().zip(mask.keep()) {
        if !keep {
            *v = Complex64::new(0.0, 0.0);
        }
    }
}

/// The operator `A = P F` for one sampling mask.
#[derive(Debug, Clone)]
pub struct MeasurementOp {
    mask: SamplingMask,
}

impl MeasurementOp {
    pub fn new(mask: SamplingMask) -> Self {
        Self { mask }
    }

    pub fn mask(&self) -> &SamplingMask {
        &self.mask
    }

    pub fn shape(&self) -> (usize, usize) {
        self.mask.shape()
    }

    fn check(&self, shape: (usize, usize)) -> Result<()> {
        if shape != self.shape() {
            return Err(Error::ShapeMismatch {
                expected: self.shape(),
                actual: shape,
            });
        }
        Ok(())
    }

    /// `A y`: centered unitary DFT with unsampled entries zeroed.
    pub fn apply(&self, y: &ComplexImage) -> Result<ComplexImage> {
        self.check(y.shape())?;
        let mut k = dft2_centered(y)?;
        apply_mask(&mut k, &self.mask);
        Ok(k)
    }

    /// `A* k`: inverse DFT of the masked input.
    pub fn adjoint(&self, k: &ComplexImage) -> Result<ComplexImage> {
        self.check(k.shape())?;
        let mut masked = k.clone();
        apply_mask(&mut masked, &self.mask);
        idft2_centered(&masked)
    }

    /// Simulated acquisition `b = A y + e`.
    ///
    /// `e` is circularly symmetric complex Gaussian on sampled entries with
    /// `E|e|^2 = noise_std^2` (each of real and imaginary parts has standard
    /// deviation `noise_std / sqrt(2)`).
    pub fn undersample(
        &self,
        y_true: &RealImage,
        noise_std: f64,
        rng: &mut RandomSource,
    ) -> Result<KSpaceMeasurement> {
        if !(noise_std.is_finite() && noise_std >= 0.0) {
            return Err(Error::invalid(
                "noise_std",
                format!("{noise_std} must be >= 0"),
            ));
        }
        let mut k = self.apply(&y_true.to_complex())?;
        if noise_std > 0.0 {
            let s = noise_std / std::f64::consts::SQRT_2;
            for (v, &keep) in k.data_mut().iter_mut().zip(self.mask.keep()) {
                if keep {
                    *v += Complex64::new(s * rng.normal(), s * rng.normal());
                }
            }
        }
        Ok(KSpaceMeasurement {
            kdata: k,
            mask: self.mask.clone(),
            noise_std,
        })
    }

    /// Zero-filled reconstruction `Re{A* b}`.
    pub fn zero_fill(&self, b: &KSpaceMeasurement) -> Result<RealImage> {
        Ok(self.adjoint(b.kdata())?.real())
    }

    /// `y - step * A*(A y - b)` on a complex image.
    ///
    /// With a unitary `F` and a selection mask this scales the sampled
    /// k-space residual by exactly `1 - step`.
    pub fn dc_update_complex(
        &self,
        y: &ComplexImage,
        b: &KSpaceMeasurement,
        step: f64,
    ) -> Result<ComplexImage> {
        check_step(step)?;
        self.check(b.shape())?;
        let mut resid = self.apply(y)?;
        for (r, kb) in resid.data_mut().iter_mut().zip(b.kdata().data()) {
            *r -= kb;
        }
        let correction = self.adjoint(&resid)?;
        Ok(y.zip_map(&correction, |v, c| v - c * step))
    }

    /// Real-valued data-consistency step `y - step * Re{A*(A y - b)}`.
    pub fn dc_update(&self, y: &RealImage, b: &KSpaceMeasurement, step: f64) -> Result<RealImage> {
        Ok(self.dc_update_complex(&y.to_complex(), b, step)?.real())
    }

    /// `||A y - b||_2` over the sampled entries.
    pub fn residual_norm_complex(&self, y: &ComplexImage, b: &KSpaceMeasurement) -> Result<f64> {
        self.check(b.shape())?;
        let k = self.apply(y)?;
        Ok(k.data()
            .iter()
            .zip(b.kdata().data())
            .zip(self.mask.keep())
            .filter(|(_, &keep)| keep)
            .map(|((a, kb), _)| (a - kb).norm_sqr())
            .sum::<f64>()
            .sqrt())
    }

    pub fn residual_norm(&self, y: &RealImage, b: &KSpaceMeasurement) -> Result<f64> {
        self.residual_norm_complex(&y.to_complex(), b)
    }
}

fn check_step(step: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&step) {
        return Err(Error::invalid(
            "dc_step",
            format!("{step} must lie in [0, 1]"),
        ));
    }
    Ok(())
}
