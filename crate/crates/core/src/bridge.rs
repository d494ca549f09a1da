//! Brownian-bridge interpolant, drift targets and predicted-latent
//! reconstruction.
//!
//! For a pair `(z0, z1)`, time `t` and noise `eps`:
//!
//! ```text
//! z_t   = (1 - t) z0 + t z1 + sigma * sqrt(t (1 - t)) * eps
//! drift = (z1 - z_t) / (1 - t)
//! z1^   = (1 - t) * v + z_t
//! ```
//!
//! `t` is one scalar per batch row, broadcast over the row. Arithmetic is
//! done in f64 and rounded once on store.

use crate::error::{LbmError, Result};
use crate::tensor::TensorBatch;

/// Largest `t` accepted by [`drift_target`].
pub const T_MAX: f64 = 1.0 - 1e-6;

/// Bridge noise scale. Zero selects the deterministic flow-matching limit.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct SigmaParam(f64);

impl SigmaParam {
    pub const ZERO: SigmaParam = SigmaParam(0.0);

    pub fn new(sigma: f64) -> Result<Self> {
        if !sigma.is_finite() || sigma < 0.0 {
            return Err(LbmError::config("sigma", format!("must be >= 0, got {sigma}")));
        }
        Ok(Self(sigma))
    }

    pub fn get(self) -> f64 {
        self.0
    }

    pub fn is_deterministic(self) -> bool {
        self.0 == 0.0
    }
}

fn check_times(t: &[f32], rows: usize) -> Result<()> {
    if t.len() != rows {
        return Err(LbmError::Shape(format!(
            "{} timesteps for {rows} rows",
            t.len()
        )));
    }
    Ok(())
}

/// `z_t` for every row.
pub fn interpolate(
    z0: &TensorBatch,
    z1: &TensorBatch,
    t: &[f32],
    sigma: SigmaParam,
    eps: &TensorBatch,
) -> Result<TensorBatch> {
    z0.same_shape(z1, "interpolate z0/z1")?;
    z0.same_shape(eps, "interpolate z0/eps")?;
    check_times(t, z0.batch())?;
    if let Some(&bad) = t.iter().find(|&&ti| !(0.0..=1.0).contains(&ti)) {
        return Err(LbmError::TimeRange(bad as f64));
    }
    let w = z0.row_len();
    let mut out = Vec::with_capacity(z0.len());
    for (i, &ti) in t.iter().enumerate() {
        let ti = ti as f64;
        let a = 1.0 - ti;
        let (r0, r1, re) = (z0.row(i), z1.row(i), eps.row(i));
        if sigma.is_deterministic() {
            out.extend((0..w).map(|j| (a * r0[j] as f64 + ti * r1[j] as f64) as f32));
        } else {
            let s = sigma.get() * (ti * a).sqrt();
            out.extend(
                (0..w).map(|j| (a * r0[j] as f64 + ti * r1[j] as f64 + s * re[j] as f64) as f32),
            );
        }
    }
    TensorBatch::new(z0.shape().to_vec(), out)
}

/// `(z1 - z_t) / (1 - t)`; errors when `t > 1 - 1e-6`.
pub fn drift_target(z1: &TensorBatch, zt: &TensorBatch, t: &[f32]) -> Result<TensorBatch> {
    z1.same_shape(zt, "drift_target")?;
    check_times(t, z1.batch())?;
    let w = z1.row_len();
    let mut out = Vec::with_capacity(z1.len());
    for (i, &ti) in t.iter().enumerate() {
        let ti = ti as f64;
        if ti > T_MAX {
            return Err(LbmError::Singularity(ti));
        }
        if ti < 0.0 {
            return Err(LbmError::TimeRange(ti));
        }
        let inv = 1.0 - ti;
        let (r1, rt) = (z1.row(i), zt.row(i));
        out.extend((0..w).map(|j| ((r1[j] as f64 - rt[j] as f64) / inv) as f32));
    }
    TensorBatch::new(z1.shape().to_vec(), out)
}

/// Predicted endpoint `(1 - t) v + z_t`.
pub fn predict_target(v: &TensorBatch, zt: &TensorBatch, t: &[f32]) -> Result<TensorBatch> {
    v.same_shape(zt, "predict_target")?;
    check_times(t, v.batch())?;
    let w = v.row_len();
    let mut out = Vec::with_capacity(v.len());
    for (i, &ti) in t.iter().enumerate() {
        let ti = ti as f64;
        if !(0.0..1.0).contains(&ti) {
            return Err(LbmError::TimeRange(ti));
        }
        let a = 1.0 - ti;
        let (rv, rt) = (v.row(i), zt.row(i));
        out.extend((0..w).map(|j| (a * rv[j] as f64 + rt[j] as f64) as f32));
    }
    TensorBatch::new(v.shape().to_vec(), out)
}

/// One training tuple set: endpoints, times, noise, interpolant and
/// regression target, plus the (encoded) condition when present.
#[derive(Debug, Clone)]
pub struct BridgeBatch {
    pub z0: TensorBatch,
    pub z1: TensorBatch,
    pub t: Vec<f32>,
    pub eps: TensorBatch,
    pub zt: TensorBatch,
    pub drift: TensorBatch,
    pub cond: Option<TensorBatch>,
}

impl BridgeBatch {
    pub fn build(
        z0: TensorBatch,
        z1: TensorBatch,
        t: Vec<f32>,
        sigma: SigmaParam,
        eps: TensorBatch,
        cond: Option<TensorBatch>,
    ) -> Result<Self> {
        let zt = interpolate(&z0, &z1, &t, sigma, &eps)?;
        let drift = drift_target(&z1, &zt, &t)?;
        if let Some(c) = &cond {
            if c.batch() != z0.batch() {
                return Err(LbmError::Shape(format!(
                    "condition batch {} vs latent batch {}",
                    c.batch(),
                    z0.batch()
                )));
            }
            if c.rank() == 4 && z0.rank() == 4 && c.shape()[2..] != z0.shape()[2..] {
                return Err(LbmError::Shape(format!(
                    "condition spatial dims {:?} vs latent {:?}",
                    &c.shape()[2..],
                    &z0.shape()[2..]
                )));
            }
        }
        Ok(Self {
            z0,
            z1,
            t,
            eps,
            zt,
            drift,
            cond,
        })
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;
    use crate::tensor::gaussian_noise;

    fn scalar(v: f32) -> TensorBatch {
        TensorBatch::new(vec![1, 1], vec![v]).unwrap()
    }

    fn sigma(s: f64) -> SigmaParam {
        SigmaParam::new(s).unwrap()
    }

    #[test]
    fn interpolate_examples() {
        let zt = interpolate(&scalar(1.0), &scalar(3.0), &[0.5], SigmaParam::ZERO, &scalar(123.0)).unwrap();
        assert_eq!(zt.data(), &[2.0]);
        let zt = interpolate(&scalar(0.0), &scalar(0.0), &[0.5], sigma(0.2), &scalar(1.0)).unwrap();
        assert!((zt.data()[0] - 0.1).abs() < 1e-7);
        let zt = interpolate(&scalar(1.25), &scalar(-3.0), &[0.0], sigma(5.0), &scalar(9.0)).unwrap();
        assert_eq!(zt.data(), &[1.25]);
    }

    #[test]
    fn interpolate_errors() {
        let a = scalar(0.0);
        let b = TensorBatch::new(vec![1, 2], vec![0.0, 0.0]).unwrap();
        assert!(matches!(
            interpolate(&a, &b, &[0.5], SigmaParam::ZERO, &a),
            Err(LbmError::Shape(_))
        ));
        assert!(matches!(
            interpolate(&a, &a, &[1.5], SigmaParam::ZERO, &a),
            Err(LbmError::TimeRange(_))
        ));
        assert!(SigmaParam::new(-0.1).is_err());
    }

    #[test]
    fn drift_examples() {
        assert_eq!(drift_target(&scalar(3.0), &scalar(2.0), &[0.5]).unwrap().data(), &[2.0]);
        assert_eq!(drift_target(&scalar(3.0), &scalar(1.0), &[0.0]).unwrap().data(), &[2.0]);
        assert_eq!(drift_target(&scalar(3.0), &scalar(3.0), &[0.7]).unwrap().data(), &[0.0]);
        assert!(matches!(
            drift_target(&scalar(3.0), &scalar(3.0), &[1.0]),
            Err(LbmError::Singularity(_))
        ));
        assert!(drift_target(&scalar(3.0), &scalar(3.0), &[0.999_999_5]).is_err());
        assert!(drift_target(&scalar(3.0), &scalar(3.0), &[0.999_998]).is_ok());
    }

    #[test]
    fn predict_examples() {
        assert_eq!(predict_target(&scalar(2.0), &scalar(2.0), &[0.5]).unwrap().data(), &[3.0]);
        assert_eq!(predict_target(&scalar(2.0), &scalar(1.0), &[0.0]).unwrap().data(), &[3.0]);
        let two = TensorBatch::new(vec![1, 2], vec![0.0, 0.0]).unwrap();
        assert!(matches!(
            predict_target(&scalar(2.0), &two, &[0.0]),
            Err(LbmError::Shape(_))
        ));
    }

    #[test]
    fn endpoints_pinned_bitwise() {
        let mut s = RngStream::new(11);
        let z0 = gaussian_noise(&[8, 3], &mut s).unwrap();
        let z1 = gaussian_noise(&[8, 3], &mut s).unwrap();
        let eps = gaussian_noise(&[8, 3], &mut s).unwrap();
        for sg in [0.0, 0.05, 0.5, 3.0] {
            let a = interpolate(&z0, &z1, &[0.0; 8], sigma(sg), &eps).unwrap();
            assert_eq!(a, z0);
            let b = interpolate(&z0, &z1, &[1.0; 8], sigma(sg), &eps).unwrap();
            assert_eq!(b, z1);
        }
    }

    #[test]
    fn bridge_batch_rejects_mismatched_condition() {
        let mut s = RngStream::new(1);
        let z = gaussian_noise(&[2, 1, 4, 4], &mut s).unwrap();
        let c = gaussian_noise(&[2, 1, 2, 2], &mut s).unwrap();
        let r = BridgeBatch::build(z.clone(), z.clone(), vec![0.0, 0.5], SigmaParam::ZERO, z.clone(), Some(c));
        assert!(r.is_err());
    }
}
