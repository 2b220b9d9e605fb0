//! Denoiser checkpoints: a TOML header record followed by one `f32` record
//! per parameter segment, all in the `DMT1` container.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::tensor::{load_tensors, save_tensors, Tensor, TensorData};
use crate::denoiser::{DenoiserConfig, DenoiserParams, TrainerConfig};
use crate::error::{Error, Result};
use crate::schedule::ScheduleParams;

const FORMAT: &str = "diffdc-checkpoint";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub format: String,
    pub version: u32,
    pub denoiser: DenoiserConfig,
    pub schedule: ScheduleParams,
    pub trainer: Option<TrainerConfig>,
    pub epoch_losses: Vec<f64>,
    pub segments: Vec<String>,
}

impl CheckpointMeta {
    pub fn new(denoiser: DenoiserConfig, schedule: ScheduleParams) -> Self {
        Self {
            format: FORMAT.into(),
            version: VERSION,
            denoiser,
            schedule,
            trainer: None,
            epoch_losses: Vec::new(),
            segments: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub meta: CheckpointMeta,
    pub params: DenoiserParams<f32>,
}

pub fn save_checkpoint(path: impl AsRef<Path>, checkpoint: &Checkpoint) -> Result<()> {
    let params = &checkpoint.params;
    if params.config() != &checkpoint.meta.denoiser {
        return Err(Error::Checkpoint(
            "metadata and parameters disagree on the config".into(),
        ));
    }
    let mut meta = checkpoint.meta.clone();
    meta.segments = params
        .layout()
        .segments()
        .iter()
        .map(|s| s.name.clone())
        .collect();
    let header = toml::to_string(&meta).map_err(|e| Error::Checkpoint(e.to_string()))?;
    let mut records = vec![Tensor::new(
        vec![header.len()],
        false,
        TensorData::U8(header.into_bytes()),
    )?];
    for seg in params.layout().segments() {
        let values = params.data()[seg.offset..seg.offset + seg.len].to_vec();
        records.push(Tensor::new(
            seg.shape.clone(),
            false,
            TensorData::F32(values),
        )?);
    }
    save_tensors(path, &records)
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let mut records = load_tensors(path)?.into_iter();
    let header = match records.next().map(Tensor::into_data) {
        Some(TensorData::U8(bytes)) => {
            String::from_utf8(bytes).map_err(|_| Error::Checkpoint("header is not UTF-8".into()))?
        }
        _ => return Err(Error::Checkpoint("missing metadata record".into())),
    };
    let meta: CheckpointMeta =
        toml::from_str(&header).map_err(|e| Error::Checkpoint(format!("metadata: {e}")))?;
    if meta.format != FORMAT || meta.version != VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported format {} v{}",
            meta.format, meta.version
        )));
    }
    let mut params = DenoiserParams::<f32>::zeros(meta.denoiser)?;
    let names: Vec<String> = params
        .layout()
        .segments()
        .iter()
        .map(|s| s.name.clone())
        .collect();
    if names != meta.segments {
        return Err(Error::Checkpoint(
            "segment list does not match the config".into(),
        ));
    }
    let layout = params.layout().clone();
    for seg in layout.segments() {
        let record = records
            .next()
            .ok_or_else(|| Error::Checkpoint(format!("missing segment {}", seg.name)))?;
        if record.dims() != seg.shape.as_slice() {
            return Err(Error::Checkpoint(format!(
                "{}: shape {:?}, expected {:?}",
                seg.name,
                record.dims(),
                seg.shape
            )));
        }
        let TensorData::F32(values) = record.into_data() else {
            return Err(Error::Checkpoint(format!(
                "{}: expected f32 data",
                seg.name
            )));
        };
        params.data_mut()[seg.offset..seg.offset + seg.len].copy_from_slice(&values);
    }
    if records.next().is_some() {
        return Err(Error::Checkpoint("unexpected trailing records".into()));
    }
    let params = DenoiserParams::from_data(meta.denoiser, params.data().to_vec())?;
    Ok(Checkpoint { meta, params })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::RandomSource;

    fn sample() -> Checkpoint {
        let config = DenoiserConfig {
            depth: 2,
            width: 3,
            ..DenoiserConfig::default()
        };
        let mut rng = RandomSource::new(1);
        let mut params = DenoiserParams::<f32>::init(config, &mut rng).unwrap();
        let last = params.len() - 1;
        params.data_mut()[last] = 0.25;
        let mut meta = CheckpointMeta::new(config, ScheduleParams::rescaled(20));
        meta.epoch_losses = vec![2.0, 1.5];
        meta.trainer = Some(TrainerConfig::default());
        Checkpoint { meta, params }
    }

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("model.ckpt");
        let ck = sample();
        save_checkpoint(&p, &ck).unwrap();
        let back = load_checkpoint(&p).unwrap();
        assert_eq!(back.params, ck.params);
        assert_eq!(back.meta.epoch_losses, ck.meta.epoch_losses);
        assert_eq!(back.meta.schedule, ck.meta.schedule);
        assert_eq!(back.meta.segments.len(), 8);
    }

    #[test]
    fn corrupted_checkpoints_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("model.ckpt");
        let ck = sample();
        save_checkpoint(&p, &ck).unwrap();
        let mut records = load_tensors(&p).unwrap();
        records.pop();
        save_tensors(&p, &records).unwrap();
        assert!(matches!(load_checkpoint(&p), Err(Error::Checkpoint(_))));
        records.swap(1, 2);
        save_tensors(&p, &records).unwrap();
        assert!(matches!(load_checkpoint(&p), Err(Error::Checkpoint(_))));
        save_tensors(&p, &records[1..]).unwrap();
        assert!(matches!(load_checkpoint(&p), Err(Error::Checkpoint(_))));
    }

    #[test]
    fn config_mismatch_rejected_on_save() {
        let mut ck = sample();
        ck.meta.denoiser.width = 9;
        let dir = tempfile::tempdir().unwrap();
        assert!(save_checkpoint(dir.path().join("x"), &ck).is_err());
    }
}
