//! Dense f32 batches and the `LBMT` file format.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{LbmError, Result};
use crate::par;
use crate::rng::{box_muller, RngStream};

const MAGIC: &[u8; 4] = b"LBMT";

/// Row-major batch of rank 2 (`[n, d]`) or rank 4 (`[n, c, h, w]`).
///
/// The leading dimension is always the batch size. Values are finite.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorBatch {
    shape: Vec<usize>,
    data: Vec<f32>,
}

pub(crate) fn check_shape(shape: &[usize]) -> Result<()> {
    if shape.len() != 2 && shape.len() != 4 {
        return Err(LbmError::Shape(format!(
            "rank must be 2 or 4, got {} ({shape:?})",
            shape.len()
        )));
    }
    if shape.contains(&0) {
        return Err(LbmError::Shape(format!("zero dimension in {shape:?}")));
    }
    Ok(())
}

impl TensorBatch {
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        check_shape(&shape)?;
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(LbmError::Shape(format!(
                "shape {shape:?} needs {expected} values, got {}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(LbmError::NonFinite("TensorBatch::new".into()));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Result<Self> {
        check_shape(&shape)?;
        let len = shape.iter().product();
        Ok(Self {
            shape,
            data: vec![0.0; len],
        })
    }

    /// Build from f64 values, rounding to f32.
    pub fn from_f64(shape: Vec<usize>, data: &[f64]) -> Result<Self> {
        Self::new(shape, data.iter().map(|&v| v as f32).collect())
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Batch size.
    pub fn batch(&self) -> usize {
        self.shape[0]
    }

    /// Flattened per-sample width.
    pub fn row_len(&self) -> usize {
        self.shape[1..].iter().product()
    }

    /// Per-sample shape (everything after the batch dimension).
    pub fn sample_shape(&self) -> &[usize] {
        &self.shape[1..]
    }

    pub fn row(&self, i: usize) -> &[f32] {
        let w = self.row_len();
        &self.data[i * w..(i + 1) * w]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f32]> {
        self.data.chunks_exact(self.row_len())
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.data.iter().map(|&v| v as f64).collect()
    }

    /// Select rows by index into a new batch.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        if indices.is_empty() {
            return Err(LbmError::Empty("row selection".into()));
        }
        let mut shape = self.shape.clone();
        shape[0] = indices.len();
        let mut data = Vec::with_capacity(indices.len() * self.row_len());
        for &i in indices {
            if i >= self.batch() {
                return Err(LbmError::Shape(format!("row {i} out of range")));
            }
            data.extend_from_slice(self.row(i));
        }
        Ok(Self { shape, data })
    }

    pub fn same_shape(&self, other: &TensorBatch, what: &str) -> Result<()> {
        if self.shape != other.shape {
            return Err(LbmError::Shape(format!(
                "{what}: {:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        Ok(())
    }
}

/// I.i.d. standard normal entries. Entry pair `k` uses stream words
/// `counter + 2k` and `counter + 2k + 1`; the stream advances past all
/// words used.
pub fn gaussian_noise(shape: &[usize], stream: &mut RngStream) -> Result<TensorBatch> {
    check_shape(shape)?;
    let len: usize = shape.iter().product();
    let pairs = len.div_ceil(2);
    let base = stream.counter();
    let key = stream.clone();
    let mut data = vec![0f32; pairs * 2];
    const CHUNK: usize = 1 << 14;
    par::for_each_chunk_mut(&mut data, CHUNK, |ci, chunk| {
        let first_pair = (ci * CHUNK / 2) as u64;
        for (j, pair) in chunk.chunks_exact_mut(2).enumerate() {
            let k = first_pair + j as u64;
            let a = key.word_at(base.wrapping_add(2 * k));
            let b = key.word_at(base.wrapping_add(2 * k + 1));
            let (x, y) = box_muller(a, b);
            pair[0] = x as f32;
            pair[1] = y as f32;
        }
    });
    data.truncate(len);
    stream.advance(2 * pairs as u64);
    Ok(TensorBatch {
        shape: shape.to_vec(),
        data,
    })
}

pub fn encode_tensor(t: &TensorBatch) -> Vec<u8> {
    let mut out = Vec::with_capacity(5 + 8 * t.rank() + 4 * t.len());
    out.extend_from_slice(MAGIC);
    out.push(t.rank() as u8);
    for &d in t.shape() {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    for &v in t.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_tensor(bytes: &[u8]) -> Result<TensorBatch> {
    if bytes.len() < 5 || &bytes[..4] != MAGIC {
        return Err(LbmError::Format("magic bytes mismatch".into()));
    }
    let rank = bytes[4] as usize;
    let header = 5 + 8 * rank;
    if bytes.len() < header {
        return Err(LbmError::Format("truncated header".into()));
    }
    let shape: Vec<usize> = bytes[5..header]
        .chunks_exact(8)
        .map(|c| u64::from_le_bytes(c.try_into().unwrap()) as usize)
        .collect();
    check_shape(&shape)?;
    let expected = shape
        .iter()
        .try_fold(4usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| LbmError::Format("shape overflows".into()))?;
    let payload = &bytes[header..];
    if payload.len() != expected {
        return Err(LbmError::Format(format!(
            "payload length {} does not match shape {shape:?} ({expected} bytes)",
            payload.len()
        )));
    }
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    TensorBatch::new(shape, data)
}

pub fn write_tensor(path: impl AsRef<Path>, t: &TensorBatch) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(&encode_tensor(t))?;
    Ok(())
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<TensorBatch> {
    decode_tensor(&fs::read(path)?)
}

/// Binary PGM (P5, maxval 255) of a single-channel image; `[0, 1]` maps
/// linearly to `[0, 255]` with clamping.
pub fn write_pgm(path: impl AsRef<Path>, width: usize, height: usize, pixels: &[f32]) -> Result<()> {
    if pixels.len() != width * height {
        return Err(LbmError::Shape(format!(
            "pgm {width}x{height} needs {} pixels, got {}",
            width * height,
            pixels.len()
        )));
    }
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend(
        pixels
            .iter()
            .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8),
    );
    fs::write(path, out)?;
    Ok(())
}


#[cfg(test)]
mod proptests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn encode_decode_identity(
            dims in prop::sample::select(vec![vec![3usize, 5], vec![2, 1, 3, 2], vec![1, 7]]),
            seed in any::<u64>(),
        ) {
            let t = gaussian_noise(&dims, &mut RngStream::new(seed)).unwrap();
            let back = decode_tensor(&encode_tensor(&t)).unwrap();
            prop_assert_eq!(back, t);
        }
    }
}
