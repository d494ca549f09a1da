//! Fixed linear latent codecs.
//!
//! `shuffle:f` is a lossless space-to-channel rearrangement and `pool:f`
//! averages `f x f` blocks (decoded by nearest-neighbour upsampling). Both
//! are linear, so the pixel loss can be backpropagated through the
//! decoder with [`Codec::decode_adjoint_sample`].

use std::fmt;
use std::str::FromStr;

use crate::error::{LbmError, Result};
use crate::tensor::TensorBatch;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Codec {
    Identity,
    PixelShuffle(usize),
    AvgPool(usize),
}

impl Codec {
    pub fn factor(&self) -> usize {
        match self {
            Codec::Identity => 1,
            Codec::PixelShuffle(f) | Codec::AvgPool(f) => *f,
        }
    }

    /// Per-sample latent shape for a per-sample input shape.
    pub fn latent_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        match (self, input) {
            (Codec::Identity, _) => Ok(input.to_vec()),
            (_, [c, h, w]) => {
                let f = self.factor();
                if h % f != 0 || w % f != 0 {
                    return Err(LbmError::Codec(format!(
                        "spatial dims {h}x{w} not divisible by {f}"
                    )));
                }
                Ok(match self {
                    Codec::PixelShuffle(_) => vec![c * f * f, h / f, w / f],
                    _ => vec![*c, h / f, w / f],
                })
            }
            _ => Err(LbmError::Codec(format!(
                "{self} needs [c, h, w] samples, got {input:?}"
            ))),
        }
    }

    /// Per-sample image shape for a per-sample latent shape.
    pub fn image_shape(&self, latent: &[usize]) -> Result<Vec<usize>> {
        match (self, latent) {
            (Codec::Identity, _) => Ok(latent.to_vec()),
            (Codec::PixelShuffle(f), [c, h, w]) => {
                if c % (f * f) != 0 {
                    return Err(LbmError::Codec(format!(
                        "{c} channels not divisible by {}",
                        f * f
                    )));
                }
                Ok(vec![c / (f * f), h * f, w * f])
            }
            (Codec::AvgPool(f), [c, h, w]) => Ok(vec![*c, h * f, w * f]),
            _ => Err(LbmError::Codec(format!(
                "latent shape {latent:?} not producible by {self}"
            ))),
        }
    }

    /// Encode one sample with image shape `shape` (`[c, h, w]` or `[d]`).
    pub fn encode_sample(&self, shape: &[usize], x: &[f64], out: &mut [f64]) {
        match *self {
            Codec::Identity => out.copy_from_slice(x),
            Codec::PixelShuffle(f) => {
                let (c, h, w) = (shape[0], shape[1], shape[2]);
                let (ho, wo) = (h / f, w / f);
                for ci in 0..c {
                    for y in 0..h {
                        for xx in 0..w {
                            let co = ci * f * f + (y % f) * f + xx % f;
                            out[(co * ho + y / f) * wo + xx / f] = x[(ci * h + y) * w + xx];
                        }
                    }
                }
            }
            Codec::AvgPool(f) => {
                let (c, h, w) = (shape[0], shape[1], shape[2]);
                let (ho, wo) = (h / f, w / f);
                let inv = 1.0 / (f * f) as f64;
                for ci in 0..c {
                    for yo in 0..ho {
                        for xo in 0..wo {
                            let mut acc = 0.0;
                            for dy in 0..f {
                                let row = (ci * h + yo * f + dy) * w + xo * f;
                                acc += x[row..row + f].iter().sum::<f64>();
                            }
                            out[(ci * ho + yo) * wo + xo] = acc * inv;
                        }
                    }
                }
            }
        }
    }

    /// Decode one sample with latent shape `shape`.
    pub fn decode_sample(&self, shape: &[usize], z: &[f64], out: &mut [f64]) {
        match *self {
            Codec::Identity => out.copy_from_slice(z),
            Codec::PixelShuffle(f) => {
                let (cz, ho, wo) = (shape[0], shape[1], shape[2]);
                let (c, h, w) = (cz / (f * f), ho * f, wo * f);
                for ci in 0..c {
                    for y in 0..h {
                        for xx in 0..w {
                            let co = ci * f * f + (y % f) * f + xx % f;
                            out[(ci * h + y) * w + xx] = z[(co * ho + y / f) * wo + xx / f];
                        }
                    }
                }
            }
            Codec::AvgPool(f) => {
                let (c, ho, wo) = (shape[0], shape[1], shape[2]);
                let (h, w) = (ho * f, wo * f);
                for ci in 0..c {
                    for y in 0..h {
                        for xx in 0..w {
                            out[(ci * h + y) * w + xx] = z[(ci * ho + y / f) * wo + xx / f];
                        }
                    }
                }
            }
        }
    }

    /// Transpose of [`Codec::decode_sample`]: maps an image-space
    /// gradient to a latent-space gradient.
    pub fn decode_adjoint_sample(&self, latent_shape: &[usize], g: &[f64], out: &mut [f64]) {
        match *self {
            Codec::Identity => out.copy_from_slice(g),
            Codec::PixelShuffle(f) => {
                let image = [latent_shape[0] / (f * f), latent_shape[1] * f, latent_shape[2] * f];
                self.encode_sample(&image, g, out);
            }
            Codec::AvgPool(f) => {
                let (c, ho, wo) = (latent_shape[0], latent_shape[1], latent_shape[2]);
                let w = wo * f;
                for ci in 0..c {
                    for yo in 0..ho {
                        for xo in 0..wo {
                            let mut acc = 0.0;
                            for dy in 0..f {
                                let row = (ci * ho * f + yo * f + dy) * w + xo * f;
                                acc += g[row..row + f].iter().sum::<f64>();
                            }
                            out[(ci * ho + yo) * wo + xo] = acc;
                        }
                    }
                }
            }
        }
    }

    fn check_rank(&self, x: &TensorBatch) -> Result<()> {
        if x.rank() == 2 && *self != Codec::Identity {
            return Err(LbmError::Codec(format!("{self} needs rank-4 input")));
        }
        Ok(())
    }

    pub fn encode(&self, x: &TensorBatch) -> Result<TensorBatch> {
        self.check_rank(x)?;
        if *self == Codec::Identity {
            return Ok(x.clone());
        }
        let image = x.sample_shape().to_vec();
        let latent = self.latent_shape(&image)?;
        self.map_rows(x, &image, &latent, |s, a, b| self.encode_sample(s, a, b))
    }

    pub fn decode(&self, z: &TensorBatch) -> Result<TensorBatch> {
        self.check_rank(z)?;
        if *self == Codec::Identity {
            return Ok(z.clone());
        }
        let latent = z.sample_shape().to_vec();
        let image = self.image_shape(&latent)?;
        self.map_rows(z, &latent, &image, |s, a, b| self.decode_sample(s, a, b))
    }

    fn map_rows(
        &self,
        src: &TensorBatch,
        src_shape: &[usize],
        dst_shape: &[usize],
        f: impl Fn(&[usize], &[f64], &mut [f64]),
    ) -> Result<TensorBatch> {
        let out_len: usize = dst_shape.iter().product();
        let mut out = Vec::with_capacity(src.batch() * out_len);
        let mut buf = vec![0.0; out_len];
        for row in src.rows() {
            let row64: Vec<f64> = row.iter().map(|&v| v as f64).collect();
            f(src_shape, &row64, &mut buf);
            out.extend(buf.iter().map(|&v| v as f32));
        }
        let mut shape = vec![src.batch()];
        shape.extend_from_slice(dst_shape);
        TensorBatch::new(shape, out)
    }
}

impl fmt::Display for Codec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Codec::Identity => write!(f, "identity"),
            Codec::PixelShuffle(k) => write!(f, "shuffle:{k}"),
            Codec::AvgPool(k) => write!(f, "pool:{k}"),
        }
    }
}

impl FromStr for Codec {
    type Err = LbmError;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "identity" {
            return Ok(Codec::Identity);
        }
        let (kind, factor) = s
            .split_once(':')
            .ok_or_else(|| LbmError::Codec(format!("unknown codec {s:?}")))?;
        let f: usize = factor
            .trim()
            .parse()
            .map_err(|_| LbmError::Codec(format!("bad factor in {s:?}")))?;
        if f == 0 {
            return Err(LbmError::Codec("factor must be >= 1".into()));
        }
        match kind {
            "shuffle" => Ok(Codec::PixelShuffle(f)),
            "pool" => Ok(Codec::AvgPool(f)),
            _ => Err(LbmError::Codec(format!(
                "unknown codec {s:?} (identity | shuffle:F | pool:F)"
            ))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;
    use crate::tensor::gaussian_noise;

    #[test]
    fn identity_on_points() {
        let x = gaussian_noise(&[8, 2], &mut RngStream::new(1)).unwrap();
        assert_eq!(Codec::Identity.encode(&x).unwrap(), x);
        assert_eq!(Codec::Identity.decode(&x).unwrap(), x);
        assert!(Codec::AvgPool(2).encode(&x).is_err());
        assert!(Codec::PixelShuffle(2).decode(&x).is_err());
    }

    #[test]
    fn shuffle_shape_and_values() {
        let data: Vec<f32> = (0..16).map(|v| v as f32).collect();
        let x = TensorBatch::new(vec![1, 1, 4, 4], data.clone()).unwrap();
        let z = Codec::PixelShuffle(2).encode(&x).unwrap();
        assert_eq!(z.shape(), &[1, 4, 2, 2]);
        let mut a = z.data().to_vec();
        a.sort_by(f32::total_cmp);
        assert_eq!(a, data);
        // channel 0 holds the top-left pixel of every block
        assert_eq!(&z.data()[..4], &[0.0, 2.0, 8.0, 10.0]);
    }

    #[test]
    fn shuffle_round_trip_bitwise() {
        let x = gaussian_noise(&[2, 1, 8, 8], &mut RngStream::new(2)).unwrap();
        let c = Codec::PixelShuffle(2);
        assert_eq!(c.decode(&c.encode(&x).unwrap()).unwrap(), x);
    }

    #[test]
    fn pool_block_mean_and_projection() {
        let x = TensorBatch::new(vec![1, 1, 2, 2], vec![0.0, 0.0, 2.0, 2.0]).unwrap();
        assert_eq!(Codec::AvgPool(2).encode(&x).unwrap().data(), &[1.0]);
        let z = gaussian_noise(&[3, 2, 3, 3], &mut RngStream::new(3)).unwrap();
        let c = Codec::AvgPool(2);
        let back = c.encode(&c.decode(&z).unwrap()).unwrap();
        for (a, b) in back.data().iter().zip(z.data()) {
            assert!((a - b).abs() < 1e-6);
        }
        let x = gaussian_noise(&[2, 1, 8, 8], &mut RngStream::new(4)).unwrap();
        let e = c.encode(&x).unwrap();
        let ee = c.encode(&c.decode(&e).unwrap()).unwrap();
        for (a, b) in ee.data().iter().zip(e.data()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn element_counts() {
        let x = gaussian_noise(&[2, 3, 8, 4], &mut RngStream::new(5)).unwrap();
        assert_eq!(Codec::PixelShuffle(2).encode(&x).unwrap().len(), x.len());
        assert_eq!(Codec::AvgPool(2).encode(&x).unwrap().len() * 4, x.len());
    }

    #[test]
    fn errors() {
        let x = gaussian_noise(&[1, 1, 5, 4], &mut RngStream::new(6)).unwrap();
        assert!(matches!(Codec::AvgPool(2).encode(&x), Err(LbmError::Codec(_))));
        let z = gaussian_noise(&[1, 3, 2, 2], &mut RngStream::new(6)).unwrap();
        assert!(Codec::PixelShuffle(2).decode(&z).is_err());
        assert!("blur:2".parse::<Codec>().is_err());
        assert!("pool:0".parse::<Codec>().is_err());
        for s in ["identity", "shuffle:2", "pool:2"] {
            assert_eq!(s.parse::<Codec>().unwrap().to_string(), s);
        }
    }

    #[test]
    fn adjoint_matches_inner_products() {
        for codec in [Codec::Identity, Codec::PixelShuffle(2), Codec::AvgPool(2)] {
            let latent = match codec {
                Codec::Identity => vec![1, 4, 4],
                Codec::PixelShuffle(_) => vec![4, 2, 3],
                Codec::AvgPool(_) => vec![2, 2, 3],
            };
            let image = codec.image_shape(&latent).unwrap();
            let (nl, ni) = (latent.iter().product::<usize>(), image.iter().product::<usize>());
            let mut s = RngStream::new(9);
            let z: Vec<f64> = (0..nl).map(|_| s.normal()).collect();
            let g: Vec<f64> = (0..ni).map(|_| s.normal()).collect();
            let mut dz = vec![0.0; ni];
            codec.decode_sample(&latent, &z, &mut dz);
            let mut ag = vec![0.0; nl];
            codec.decode_adjoint_sample(&latent, &g, &mut ag);
            let lhs: f64 = dz.iter().zip(&g).map(|(a, b)| a * b).sum();
            let rhs: f64 = z.iter().zip(&ag).map(|(a, b)| a * b).sum();
            assert!((lhs - rhs).abs() < 1e-10, "{codec}: {lhs} vs {rhs}");
        }
    }
}

#[cfg(test)]
mod proptests {
    use super::*;
    use crate::rng::RngStream;
    use crate::tensor::gaussian_noise;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn codecs_are_linear(seed in any::<u64>(), a in -2.0f32..2.0, b in -2.0f32..2.0) {
            let mut s = RngStream::new(seed);
            let x = gaussian_noise(&[2, 1, 4, 4], &mut s).unwrap();
            let y = gaussian_noise(&[2, 1, 4, 4], &mut s).unwrap();
            let mix: Vec<f32> = x.data().iter().zip(y.data()).map(|(p, q)| a * p + b * q).collect();
            let mix = TensorBatch::new(x.shape().to_vec(), mix).unwrap();
            for codec in [Codec::PixelShuffle(2), Codec::AvgPool(2)] {
                let lhs = codec.encode(&mix).unwrap();
                let (ex, ey) = (codec.encode(&x).unwrap(), codec.encode(&y).unwrap());
                for ((l, p), q) in lhs.data().iter().zip(ex.data()).zip(ey.data()) {
                    prop_assert!((l - (a * p + b * q)).abs() < 1e-5);
                }
            }
        }
    }
}
