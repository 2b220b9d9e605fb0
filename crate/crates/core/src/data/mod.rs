//! Synthetic data, datasets and on-disk formats.

mod checkpoint;
mod dataset;
mod pgm;
mod phantom;
mod tensor;

use std::path::Path;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CheckpointMeta};
pub use dataset::{
    build_dataset, build_dataset_from_images, generate_sample, generate_samples, simulate_sample,
    DatasetConfig, DatasetEntry, DatasetManifest, Sample, MANIFEST_FILE,
};
pub use pgm::{decode_pgm, encode_pgm, read_pgm, write_pgm};
pub use phantom::{gen_phantom, PhantomSpec};
pub use tensor::{
    load_tensor, load_tensors, save_tensor, save_tensors, Tensor, TensorData, COMPLEX_FLAG, MAGIC,
};

use crate::error::Result;
use crate::numerics::RealImage;

/// Reads a real image from a `.pgm` greymap or a `DMT1` tensor.
pub fn load_image_file(path: impl AsRef<Path>) -> Result<RealImage> {
    let path = path.as_ref();
    let is_pgm = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("pgm"));
    if is_pgm {
        read_pgm(path)
    } else {
        load_tensor(path)?.to_real_image()
    }
}
