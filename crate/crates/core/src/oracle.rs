//! Ground-truth drifts for 1-D Gaussian endpoints.
//!
//! With independent `z0 ~ N(mu0, s0^2)`, `z1 ~ N(mu1, s1^2)` the pair
//! `(z_t, z1)` is jointly Gaussian, so the projected drift
//! `E[(z1 - z_t) / (1 - t) | z_t = z]` has a closed form. The Monte-Carlo
//! estimator bins raw drifts by `z_t` and serves as an independent check.

use std::fmt;
use std::str::FromStr;

use crate::bridge::SigmaParam;
use crate::error::{LbmError, Result};
use crate::par;
use crate::rng::RngStream;
use crate::sample::DriftField;
use crate::tensor::TensorBatch;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianTaskSpec {
    pub mu0: f64,
    pub s0: f64,
    pub mu1: f64,
    pub s1: f64,
    pub sigma: SigmaParam,
}

impl GaussianTaskSpec {
    pub fn new(mu0: f64, s0: f64, mu1: f64, s1: f64, sigma: f64) -> Result<Self> {
        if !(s0 > 0.0 && s1 > 0.0) {
            return Err(LbmError::config("spec", format!("scales must be positive, got {s0}, {s1}")));
        }
        Ok(Self {
            mu0,
            s0,
            mu1,
            s1,
            sigma: SigmaParam::new(sigma)?,
        })
    }

    /// Mean and standard deviation of the `z_t` marginal.
    pub fn marginal(&self, t: f64) -> (f64, f64) {
        let a = 1.0 - t;
        let s = self.sigma.get();
        let mean = a * self.mu0 + t * self.mu1;
        let var = a * a * self.s0 * self.s0 + t * t * self.s1 * self.s1 + s * s * t * a;
        (mean, var.sqrt())
    }
}

impl fmt::Display for GaussianTaskSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},{},{},{}", self.mu0, self.s0, self.mu1, self.s1, self.sigma.get())
    }
}

impl FromStr for GaussianTaskSpec {
    type Err = LbmError;

    /// `mu0,s0,mu1,s1,sigma`
    fn from_str(s: &str) -> Result<Self> {
        let v: Vec<f64> = s
            .split(',')
            .map(|p| p.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| LbmError::config("spec", format!("expected mu0,s0,mu1,s1,sigma, got {s:?}")))?;
        if v.len() != 5 {
            return Err(LbmError::config("spec", format!("expected 5 numbers, got {}", v.len())));
        }
        Self::new(v[0], v[1], v[2], v[3], v[4])
    }
}

/// Closed-form projected drift at `(z, t)`.
pub fn gaussian_drift(spec: &GaussianTaskSpec, z: f64, t: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&t) {
        return Err(LbmError::TimeRange(t));
    }
    let a = 1.0 - t;
    let (mean, sd) = spec.marginal(t);
    let coef = t * spec.s1 * spec.s1 / (sd * sd);
    let cond_mean = spec.mu1 + coef * (z - mean);
    Ok((cond_mean - z) / a)
}

/// One `z_t` bin of the Monte-Carlo estimator. `z` is the mean of the
/// `z_t` draws that fell in the bin, which is where a bin average of a
/// drift linear in `z` is unbiased.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriftBin {
    pub z: f64,
    pub drift: f64,
    pub stderr: f64,
    pub count: u64,
}

#[derive(Debug, Clone, Copy, Default)]
struct BinAcc {
    count: u64,
    sum_z: f64,
    sum_v: f64,
    sum_v2: f64,
}

/// Bin `n` raw drifts `(z1 - z_t) / (1 - t)` into `bins` equal-width bins
/// on `mean +- 4 sd` of the `z_t` marginal. Empty bins are `None`.
pub fn mc_binned_drift(
    spec: &GaussianTaskSpec,
    t: f64,
    n: usize,
    bins: usize,
    stream: &RngStream,
) -> Result<Vec<Option<DriftBin>>> {
    if !(0.0..1.0).contains(&t) {
        return Err(LbmError::TimeRange(t));
    }
    if bins == 0 || n < bins * 50 {
        return Err(LbmError::Metric(format!("need n >= 50 * bins, got n = {n}, bins = {bins}")));
    }
    let (mean, sd) = spec.marginal(t);
    let (lo, width) = (mean - 4.0 * sd, 8.0 * sd / bins as f64);
    let a = 1.0 - t;
    let noise = spec.sigma.get() * (t * a).sqrt();
    const CHUNK: usize = 1 << 15;
    let parts = par::map_range(par::chunk_count(n, CHUNK), |ci| {
        let mut s = stream.split(ci as u64);
        let mut acc = vec![BinAcc::default(); bins];
        for _ in ci * CHUNK..((ci + 1) * CHUNK).min(n) {
            let z0 = spec.mu0 + spec.s0 * s.normal();
            let z1 = spec.mu1 + spec.s1 * s.normal();
            let eps = s.normal();
            let zt = a * z0 + t * z1 + noise * eps;
            let v = (z1 - zt) / a;
            let k = ((zt - lo) / width).floor();
            if k < 0.0 || k >= bins as f64 {
                continue;
            }
            let b = &mut acc[k as usize];
            b.count += 1;
            b.sum_z += zt;
            b.sum_v += v;
            b.sum_v2 += v * v;
        }
        acc
    });
    let mut total = vec![BinAcc::default(); bins];
    for part in parts {
        for (t, p) in total.iter_mut().zip(part) {
            t.count += p.count;
            t.sum_z += p.sum_z;
            t.sum_v += p.sum_v;
            t.sum_v2 += p.sum_v2;
        }
    }
    Ok(total
        .into_iter()
        .map(|b| {
            if b.count < 2 {
                return None;
            }
            let c = b.count as f64;
            let m = b.sum_v / c;
            let var = ((b.sum_v2 - c * m * m) / (c - 1.0)).max(0.0);
            Some(DriftBin {
                z: b.sum_z / c,
                drift: m,
                stderr: (var / c).sqrt(),
                count: b.count,
            })
        })
        .collect())
}

/// The closed-form drift as a solver field; applied elementwise.
#[derive(Debug, Clone, Copy)]
pub struct GaussianDrift(pub GaussianTaskSpec);

impl DriftField for GaussianDrift {
    fn drift(&self, zt: &TensorBatch, t: &[f32], _cond: Option<&TensorBatch>) -> Result<TensorBatch> {
        let w = zt.row_len();
        let mut out = Vec::with_capacity(zt.len());
        for (i, row) in zt.rows().enumerate() {
            let ti = t[i] as f64;
            for &z in row.iter().take(w) {
                out.push(gaussian_drift(&self.0, z as f64, ti)? as f32);
            }
        }
        TensorBatch::new(zt.shape().to_vec(), out)
    }
}
