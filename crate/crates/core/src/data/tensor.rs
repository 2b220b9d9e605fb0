//! `DMT1` tensor container.
//!
//! ```text
//! "DMT1" | u8 dtype | u8 rank | rank x u32 LE dims | LE payload, row-major
//! ```
//!
//! dtype: 0 = f32, 1 = f64, 2 = u8. Bit `0x80` marks a complex tensor whose
//! payload is the real part followed by the imaginary part.

use std::path::Path;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::masks::SamplingMask;
use crate::numerics::{ComplexImage, RealImage};

pub const MAGIC: [u8; 4] = *b"DMT1";
pub const COMPLEX_FLAG: u8 = 0x80;

#[derive(Debug, Clone, PartialEq)]
pub enum TensorData {
    F32(Vec<f32>),
    F64(Vec<f64>),
    U8(Vec<u8>),
}

impl TensorData {
    fn tag(&self) -> u8 {
        match self {
            TensorData::F32(_) => 0,
            TensorData::F64(_) => 1,
            TensorData::U8(_) => 2,
        }
    }

    fn len(&self) -> usize {
        match self {
            TensorData::F32(v) => v.len(),
            TensorData::F64(v) => v.len(),
            TensorData::U8(v) => v.len(),
        }
    }

    fn as_f64(&self) -> Option<Vec<f64>> {
        match self {
            TensorData::F32(v) => Some(v.iter().map(|&x| x as f64).collect()),
            TensorData::F64(v) => Some(v.clone()),
            TensorData::U8(_) => None,
        }
    }
}

fn element_size(tag: u8) -> u64 {
    match tag {
        0 => 4,
        1 => 8,
        _ => 1,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    dims: Vec<usize>,
    complex: bool,
    data: TensorData,
}

impl Tensor {
    /// `data` holds `prod(dims)` values, or twice that for complex tensors.
    pub fn new(dims: Vec<usize>, complex: bool, data: TensorData) -> Result<Self> {
        if complex && matches!(data, TensorData::U8(_)) {
            return Err(Error::invalid(
                "tensor",
                "complex tensors must be floating point",
            ));
        }
        let count = dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .and_then(|n| n.checked_mul(if complex { 2 } else { 1 }));
        if count != Some(data.len()) {
            return Err(Error::invalid(
                "tensor",
                format!("{} values do not fill shape {dims:?}", data.len()),
            ));
        }
        if dims.len() > u8::MAX as usize || dims.iter().any(|&d| d > u32::MAX as usize) {
            return Err(Error::invalid(
                "tensor",
                format!("shape {dims:?} not representable"),
            ));
        }
        Ok(Self {
            dims,
            complex,
            data,
        })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn is_complex(&self) -> bool {
        self.complex
    }

    pub fn data(&self) -> &TensorData {
        &self.data
    }

    pub fn into_data(self) -> TensorData {
        self.data
    }

    pub fn from_real_image(img: &RealImage) -> Self {
        Self::new(
            vec![img.height(), img.width()],
            false,
            TensorData::F64(img.data().to_vec()),
        )
        .expect("image shape is consistent")
    }

    pub fn from_complex_image(img: &ComplexImage) -> Self {
        let mut data: Vec<f64> = img.data().iter().map(|c| c.re).collect();
        data.extend(img.data().iter().map(|c| c.im));
        Self::new(vec![img.height(), img.width()], true, TensorData::F64(data))
            .expect("image shape is consistent")
    }

    pub fn from_mask(mask: &SamplingMask) -> Self {
        let data = mask.keep().iter().map(|&k| k as u8).collect();
        Self::new(
            vec![mask.height(), mask.width()],
            false,
            TensorData::U8(data),
        )
        .expect("mask shape is consistent")
    }

    fn image_dims(&self) -> Result<(usize, usize)> {
        match self.dims[..] {
            [h, w] => Ok((h, w)),
            _ => Err(Error::invalid(
                "tensor",
                format!("expected a rank-2 tensor, got shape {:?}", self.dims),
            )),
        }
    }

    pub fn to_real_image(&self) -> Result<RealImage> {
        let (h, w) = self.image_dims()?;
        if self.complex {
            return Err(Error::invalid(
                "tensor",
                "expected a real tensor, found complex",
            ));
        }
        let data = self
            .data
            .as_f64()
            .ok_or_else(|| Error::invalid("tensor", "expected floating-point data"))?;
        RealImage::new(h, w, data)
    }

    pub fn to_complex_image(&self) -> Result<ComplexImage> {
        let (h, w) = self.image_dims()?;
        let data = self
            .data
            .as_f64()
            .ok_or_else(|| Error::invalid("tensor", "expected floating-point data"))?;
        let values = if self.complex {
            let (re, im) = data.split_at(h * w);
            re.iter()
                .zip(im)
                .map(|(&a, &b)| Complex64::new(a, b))
                .collect()
        } else {
            data.into_iter().map(|a| Complex64::new(a, 0.0)).collect()
        };
        ComplexImage::new(h, w, values)
    }

    pub fn to_mask(&self) -> Result<SamplingMask> {
        let (h, w) = self.image_dims()?;
        match &self.data {
            TensorData::U8(v) if !self.complex => {
                if let Some(bad) = v.iter().find(|&&b| b > 1) {
                    return Err(Error::invalid("mask", format!("entry {bad} is not 0 or 1")));
                }
                SamplingMask::from_keep(h, w, v.iter().map(|&b| b == 1).collect())
            }
            _ => Err(Error::invalid("mask", "expected a u8 tensor")),
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(6 + 4 * self.dims.len() + self.data.len() * 8);
        out.extend_from_slice(&MAGIC);
        out.push(self.data.tag() | if self.complex { COMPLEX_FLAG } else { 0 });
        out.push(self.dims.len() as u8);
        for &d in &self.dims {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        match &self.data {
            TensorData::F32(v) => v
                .iter()
                .for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            TensorData::F64(v) => v
                .iter()
                .for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            TensorData::U8(v) => out.extend_from_slice(v),
        }
        out
    }

    /// Parses one record from the front of `bytes`, returning it and the
    /// number of bytes consumed. `path` only labels errors.
    pub fn decode(bytes: &[u8], path: &Path) -> Result<(Self, usize)> {
        let truncated = |what, needed: usize| Error::Truncated {
            path: path.to_path_buf(),
            what,
            needed: needed as u64,
            available: bytes.len() as u64,
        };
        let format = |reason: String| Error::Format {
            path: path.to_path_buf(),
            reason,
        };
        if bytes.len() < 4 {
            return Err(truncated("magic", 4));
        }
        if bytes[..4] != MAGIC {
            let mut found = [0u8; 4];
            found.copy_from_slice(&bytes[..4]);
            return Err(Error::BadMagic {
                path: path.to_path_buf(),
                found,
            });
        }
        if bytes.len() < 6 {
            return Err(truncated("header", 6));
        }
        let (tag_byte, rank) = (bytes[4], bytes[5] as usize);
        let complex = tag_byte & COMPLEX_FLAG != 0;
        let tag = tag_byte & !COMPLEX_FLAG;
        if tag > 2 {
            return Err(format(format!("unknown dtype tag {tag}")));
        }
        if complex && tag == 2 {
            return Err(format("complex flag on a u8 tensor".into()));
        }
        let header_len = 6 + 4 * rank;
        if bytes.len() < header_len {
            return Err(truncated("dimensions", header_len));
        }
        let dims32: Vec<u32> = bytes[6..header_len]
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        let payload_len = dims32
            .iter()
            .try_fold(1u64, |acc, &d| acc.checked_mul(d as u64))
            .and_then(|n| n.checked_mul(if complex { 2 } else { 1 }))
            .and_then(|n| n.checked_mul(element_size(tag)))
            .and_then(|n| n.checked_add(header_len as u64))
            .filter(|&n| n <= isize::MAX as u64)
            .ok_or_else(|| Error::ShapeOverflow {
                path: path.to_path_buf(),
                dims: dims32.clone(),
            })?;
        let total = payload_len as usize;
        if bytes.len() < total {
            return Err(truncated("payload", total));
        }
        let payload = &bytes[header_len..total];
        let data = match tag {
            0 => TensorData::F32(
                payload
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                    .collect(),
            ),
            1 => TensorData::F64(
                payload
                    .chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                    .collect(),
            ),
            _ => TensorData::U8(payload.to_vec()),
        };
        let dims = dims32.into_iter().map(|d| d as usize).collect();
        let tensor = Tensor::new(dims, complex, data).map_err(|e| format(e.to_string()))?;
        Ok((tensor, total))
    }
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn save_tensor(path: impl AsRef<Path>, tensor: &Tensor) -> Result<()> {
    write_bytes(path.as_ref(), &tensor.encode())
}

/// Reads a file holding exactly one tensor.
pub fn load_tensor(path: impl AsRef<Path>) -> Result<Tensor> {
    let path = path.as_ref();
    let bytes = read_bytes(path)?;
    let (tensor, used) = Tensor::decode(&bytes, path)?;
    if used != bytes.len() {
        return Err(Error::Format {
            path: path.to_path_buf(),
            reason: format!("{} trailing bytes after tensor", bytes.len() - used),
        });
    }
    Ok(tensor)
}

/// Writes several records back to back.
pub fn save_tensors(path: impl AsRef<Path>, tensors: &[Tensor]) -> Result<()> {
    let bytes: Vec<u8> = tensors.iter().flat_map(Tensor::encode).collect();
    write_bytes(path.as_ref(), &bytes)
}

pub fn load_tensors(path: impl AsRef<Path>) -> Result<Vec<Tensor>> {
    let path = path.as_ref();
    let bytes = read_bytes(path)?;
    let mut rest = &bytes[..];
    let mut out = Vec::new();
    while !rest.is_empty() {
        let (tensor, used) = Tensor::decode(rest, path)?;
        out.push(tensor);
        rest = &rest[used..];
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{gaussian_image, RandomSource};

    fn path() -> &'static Path {
        Path::new("mem")
    }

    #[test]
    fn header_layout_is_exact() {
        let t = Tensor::new(vec![2, 3], false, TensorData::U8(vec![1, 2, 3, 4, 5, 6])).unwrap();
        let bytes = t.encode();
        assert_eq!(
            bytes,
            [b'D', b'M', b'T', b'1', 2, 2, 2, 0, 0, 0, 3, 0, 0, 0, 1, 2, 3, 4, 5, 6]
        );
        let f = Tensor::new(vec![1], false, TensorData::F32(vec![1.0])).unwrap();
        assert_eq!(
            &f.encode()[4..],
            &[0, 1, 1, 0, 0, 0, 0x00, 0x00, 0x80, 0x3f]
        );
    }

    #[test]
    fn real_round_trip_is_bitwise() {
        let mut rng = RandomSource::new(1);
        let img = gaussian_image(&mut rng, 64, 64);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.dmt");
        save_tensor(&p, &Tensor::from_real_image(&img)).unwrap();
        let back = load_tensor(&p).unwrap().to_real_image().unwrap();
        for (a, b) in img.data().iter().zip(back.data()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn complex_round_trip_sets_flag() {
        let mut rng = RandomSource::new(2);
        let re = gaussian_image(&mut rng, 5, 7);
        let im = gaussian_image(&mut rng, 5, 7);
        let img = ComplexImage::from_parts(&re, &im).unwrap();
        let t = Tensor::from_complex_image(&img);
        let bytes = t.encode();
        assert_eq!(bytes[4], 1 | COMPLEX_FLAG);
        let (back, used) = Tensor::decode(&bytes, path()).unwrap();
        assert_eq!(used, bytes.len());
        assert_eq!(back.to_complex_image().unwrap(), img);
    }

    #[test]
    fn mask_round_trip() {
        let keep = vec![true, false, false, true, true, false];
        let mask = SamplingMask::from_keep(2, 3, keep).unwrap();
        let (back, _) = Tensor::decode(&Tensor::from_mask(&mask).encode(), path()).unwrap();
        assert_eq!(back.to_mask().unwrap().keep(), mask.keep());
        let bad = Tensor::new(vec![1, 2], false, TensorData::U8(vec![0, 7])).unwrap();
        assert!(bad.to_mask().is_err());
    }

    #[test]
    fn decode_errors_are_distinct() {
        let good = Tensor::from_real_image(&RealImage::filled(3, 3, 0.5)).encode();
        let mut wrong = good.clone();
        wrong[..4].copy_from_slice(b"DMT2");
        assert!(matches!(
            Tensor::decode(&wrong, path()),
            Err(Error::BadMagic { found, .. }) if &found == b"DMT2"
        ));
        for cut in [2, 5, 9, good.len() - 1] {
            assert!(matches!(
                Tensor::decode(&good[..cut], path()),
                Err(Error::Truncated { .. })
            ));
        }
        let mut huge = b"DMT1".to_vec();
        huge.extend_from_slice(&[1, 4]);
        for _ in 0..4 {
            huge.extend_from_slice(&u32::MAX.to_le_bytes());
        }
        assert!(matches!(
            Tensor::decode(&huge, path()),
            Err(Error::ShapeOverflow { .. })
        ));
        let mut tag = good.clone();
        tag[4] = 9;
        assert!(matches!(
            Tensor::decode(&tag, path()),
            Err(Error::Format { .. })
        ));
        tag[4] = 2 | COMPLEX_FLAG;
        assert!(matches!(
            Tensor::decode(&tag, path()),
            Err(Error::Format { .. })
        ));
    }

    #[test]
    fn trailing_bytes_rejected_for_single_tensor() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.dmt");
        let mut bytes = Tensor::from_real_image(&RealImage::zeros(2, 2)).encode();
        bytes.push(0);
        std::fs::write(&p, bytes).unwrap();
        assert!(matches!(load_tensor(&p), Err(Error::Format { .. })));
    }

    #[test]
    fn multi_record_files() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("many.dmt");
        let a = Tensor::new(vec![3], false, TensorData::U8(b"abc".to_vec())).unwrap();
        let b = Tensor::new(vec![2, 1], false, TensorData::F32(vec![1.5, -2.0])).unwrap();
        save_tensors(&p, &[a.clone(), b.clone()]).unwrap();
        assert_eq!(load_tensors(&p).unwrap(), vec![a, b]);
        assert!(matches!(
            load_tensor(dir.path().join("missing")),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn inconsistent_construction_rejected() {
        assert!(Tensor::new(vec![2, 2], false, TensorData::F64(vec![0.0; 3])).is_err());
        assert!(Tensor::new(vec![2], true, TensorData::F64(vec![0.0; 2])).is_err());
        assert!(Tensor::new(vec![2], true, TensorData::U8(vec![0; 4])).is_err());
        let t = Tensor::new(vec![4], false, TensorData::F64(vec![0.0; 4])).unwrap();
        assert!(t.to_real_image().is_err());
    }
}
