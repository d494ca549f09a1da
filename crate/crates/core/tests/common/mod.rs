//! Forward-only reimplementation of the network and losses, used as a
//! finite-difference oracle for the analytic gradients.
#![allow(dead_code)]

use lbm::bridge::{BridgeBatch, SigmaParam};
use lbm::codec::Codec;
use lbm::model::DriftModel;
use lbm::rng::RngStream;
use lbm::schedule::{sample_t, TimestepDistribution};
use lbm::tensor::{gaussian_noise, TensorBatch};
use lbm::train::{lbm_loss, total_loss, CropWindow, PixelLossKind, PixelTerm};

/// tanh MLP, weights row-major `out x in` followed by the bias, per layer.
pub fn mlp(widths: &[usize], params: &[f64], input: &[f64]) -> Vec<f64> {
    let mut x = input.to_vec();
    let mut off = 0;
    for l in 0..widths.len() - 1 {
        let (ni, no) = (widths[l], widths[l + 1]);
        let mut y = vec![0.0; no];
        for (o, yo) in y.iter_mut().enumerate() {
            let mut s = params[off + ni * no + o];
            for i in 0..ni {
                s += params[off + o * ni + i] * x[i];
            }
            *yo = if l + 2 < widths.len() { s.tanh() } else { s };
        }
        off += ni * no + no;
        x = y;
    }
    x
}

pub struct Case {
    pub widths: Vec<usize>,
    pub batch: BridgeBatch,
    pub pixel: Option<(TensorBatch, Option<CropWindow>, f64)>,
}

/// Nearest-neighbour upsampling of a `[1, h, w]` latent by `f`.
pub fn upsample(z: &[f64], h: usize, w: usize, f: usize) -> Vec<f64> {
    let mut out = vec![0.0; h * w * f * f];
    for y in 0..h * f {
        for x in 0..w * f {
            out[y * w * f + x] = z[(y / f) * w + x / f];
        }
    }
    out
}

pub fn oracle_loss(case: &Case, params: &[f64]) -> f64 {
    let b = &case.batch;
    let n = b.len();
    let d = b.zt.row_len();
    let mut bridge = 0.0;
    let mut pixel = 0.0;
    for i in 0..n {
        let mut input: Vec<f64> = b.zt.row(i).iter().map(|&v| v as f64).collect();
        input.push(b.t[i] as f64);
        if let Some(c) = &b.cond {
            input.extend(c.row(i).iter().map(|&v| v as f64));
        }
        let v = mlp(&case.widths, params, &input);
        for (vj, &y) in v.iter().zip(b.drift.row(i)) {
            bridge += (vj - y as f64).powi(2);
        }
        if let Some((x1, crop, _)) = &case.pixel {
            let (h, w) = (b.zt.shape()[2], b.zt.shape()[3]);
            let a = 1.0 - b.t[i] as f64;
            let zhat: Vec<f64> = (0..d).map(|j| a * v[j] + b.zt.row(i)[j] as f64).collect();
            let img = upsample(&zhat, h, w, 2);
            let side = w * 2;
            let mut acc = 0.0;
            let mut count = 0;
            for y in 0..h * 2 {
                for x in 0..side {
                    let inside = crop.is_none_or(|c| y >= c.row && y < c.row + c.size && x >= c.col && x < c.col + c.size);
                    if inside {
                        acc += (img[y * side + x] - x1.row(i)[y * side + x] as f64).powi(2);
                        count += 1;
                    }
                }
            }
            pixel += acc / count as f64;
        }
    }
    let mut total = bridge / (n * d) as f64;
    if let Some((_, _, lambda)) = &case.pixel {
        total += lambda * pixel / n as f64;
    }
    total
}

pub fn random_case(seed: u64, image: bool, cond: bool) -> Case {
    let s = RngStream::new(seed);
    let n = 6 + (seed as usize % 5);
    let shape = if image { vec![n, 1, 4, 4] } else { vec![n, 2] };
    let d: usize = shape[1..].iter().product();
    let cdim = if cond { 3 } else { 0 };
    let hidden = 5 + (seed as usize % 4);
    let widths = vec![d + 1 + cdim, hidden, hidden + 2, d];
    let z0 = gaussian_noise(&shape, &mut s.split(0)).unwrap();
    let z1 = gaussian_noise(&shape, &mut s.split(1)).unwrap();
    let eps = gaussian_noise(&shape, &mut s.split(2)).unwrap();
    let t = sample_t(&TimestepDistribution::DiscreteUniform(4), n, &mut s.split(3)).unwrap();
    let c = cond.then(|| gaussian_noise(&[n, cdim], &mut s.split(4)).unwrap());
    let batch = BridgeBatch::build(z0, z1, t, SigmaParam::new(0.3).unwrap(), eps, c).unwrap();
    let pixel = image.then(|| {
        let x1 = gaussian_noise(&[n, 1, 8, 8], &mut s.split(5)).unwrap();
        let crop = seed.is_multiple_of(2).then_some(CropWindow { row: 1, col: 3, size: 4 });
        (x1, crop, 10.0)
    });
    Case { widths, batch, pixel }
}

/// Relative error of the analytic gradient against central differences:
/// `(vector error, worst per-component error over significant entries)`.
pub fn gradient_error(case: &Case, seed: u64) -> (f64, f64) {
    let mut model = DriftModel::init(case.widths.clone(), case.batch.cond.as_ref().map_or(0, |c| c.row_len()), &mut RngStream::new(seed + 100)).unwrap();
    // nonzero biases so their gradients are exercised away from zero
    let mut s = RngStream::new(seed + 200);
    for l in 0..case.widths.len() - 1 {
        for k in model.bias_range(l) {
            model.params_mut()[k] = (0.3 * s.normal()) as f32;
        }
    }
    let codec = Codec::AvgPool(2);
    let analytic = match &case.pixel {
        Some((x1, crop, lambda)) => {
            let term = PixelTerm {
                codec: &codec,
                x1,
                kind: PixelLossKind::L2,
                crop: *crop,
            };
            total_loss(&model, &case.batch, *lambda, Some(term)).unwrap().grad
        }
        None => lbm_loss(&model, &case.batch).unwrap().grad,
    };
    let base: Vec<f32> = model.params().to_vec();
    let mut numeric = vec![0.0; base.len()];
    let h = 1e-3f32;
    for k in 0..base.len() {
        let (up, down) = (base[k] + h, base[k] - h);
        let mut p: Vec<f64> = base.iter().map(|&v| v as f64).collect();
        p[k] = up as f64;
        let lu = oracle_loss(case, &p);
        p[k] = down as f64;
        let ld = oracle_loss(case, &p);
        numeric[k] = (lu - ld) / (up as f64 - down as f64);
    }
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = analytic.iter().zip(&numeric).map(|(a, b)| a - b).collect();
    let rel = norm(&diff) / norm(&numeric);
    let big = numeric.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let worst = analytic
        .iter()
        .zip(&numeric)
        .filter(|(_, b)| b.abs() > 1e-2 * big)
        .map(|(a, b)| (a - b).abs() / b.abs())
        .fold(0.0, f64::max);
    (rel, worst)
}

