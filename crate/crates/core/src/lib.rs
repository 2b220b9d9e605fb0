//! Conditional denoising-diffusion reconstruction of undersampled MRI with a
//! k-space data-consistency step after every reverse iteration.
//!
//! The measurement model is `b = P F y + e` with a centered unitary 2-D DFT
//! `F` and a binary sampling mask `P`. A noise predictor `f(x, y_t, alpha_bar)`
//! is trained on (zero-filled, ground truth) pairs and then drives ancestral
//! sampling, optionally followed at every step by
//! `y <- y - dc_step * A*(A y - b)`.

pub mod data;
pub mod denoiser;
pub mod error;
pub mod forward;
pub mod masks;
pub mod metrics;
pub mod numerics;
pub mod sampler;
pub mod schedule;

pub use data::{Checkpoint, DatasetManifest, PhantomSpec, Tensor};
pub use denoiser::{DenoiserConfig, DenoiserParams, NoisePredictor};
pub use error::{Error, Result};
pub use forward::{KSpaceMeasurement, MeasurementOp};
pub use masks::{MaskParams, MaskPattern, SamplingMask};
pub use metrics::MetricReport;
pub use numerics::{ComplexImage, RandomSource, RealImage};
pub use sampler::{ReconstructionReport, SamplerConfig};
pub use schedule::{NoiseSchedule, ScheduleParams};
