//! Drift regression, pixel loss and the training loop.
//!
//! The bridge term is the mean squared error between the predicted and
//! target drift over all latent elements. The pixel term decodes the
//! predicted endpoint `(1 - t) v + z_t` and compares it with `x1` under L1
//! or L2, optionally on one random square crop. The objective is
//! `bridge + lambda * pixel`; its gradient flows through the (fixed)
//! decoder via the codec adjoint.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;
use std::time::{Duration, Instant};

use crate::bridge::{BridgeBatch, SigmaParam};
use crate::codec::Codec;
use crate::data::PairedTask;
use crate::error::{LbmError, Result};
use crate::model::{fill_input, DriftModel};
use crate::optim::{Optimizer, OptimizerConfig};
use crate::rng::RngStream;
use crate::schedule::{sample_t, TimestepDistribution};
use crate::tensor::{gaussian_noise, TensorBatch};

/// Total loss above which a run is declared diverged.
pub const DIVERGENCE_LIMIT: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PixelLossKind {
    None,
    L1,
    L2,
}

impl fmt::Display for PixelLossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PixelLossKind::None => "none",
            PixelLossKind::L1 => "l1",
            PixelLossKind::L2 => "l2",
        })
    }
}

impl FromStr for PixelLossKind {
    type Err = LbmError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "none" => Ok(PixelLossKind::None),
            "l1" => Ok(PixelLossKind::L1),
            "l2" => Ok(PixelLossKind::L2),
            other => Err(LbmError::config("pixel_loss", format!("unknown kind {other:?} (none | l1 | l2)"))),
        }
    }
}

/// Images with a side above `threshold` are compared on one random
/// `size x size` crop.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CropPolicy {
    pub threshold: usize,
    pub size: usize,
}

impl Default for CropPolicy {
    fn default() -> Self {
        Self { threshold: 8, size: 8 }
    }
}

/// Square pixel window `[row, row + size) x [col, col + size)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CropWindow {
    pub row: usize,
    pub col: usize,
    pub size: usize,
}

impl CropPolicy {
    /// Draw the window for one iteration, or `None` when the whole image
    /// is compared. `image` is the per-sample shape.
    pub fn window(&self, image: &[usize], stream: &mut RngStream) -> Result<Option<CropWindow>> {
        let [_, h, w] = image else {
            return Ok(None);
        };
        if h.max(w) <= &self.threshold {
            return Ok(None);
        }
        if self.size > *h || self.size > *w {
            return Err(LbmError::Shape(format!(
                "crop {} larger than image {h}x{w}",
                self.size
            )));
        }
        let row = stream.below((h - self.size + 1) as u64) as usize;
        let col = stream.below((w - self.size + 1) as u64) as usize;
        Ok(Some(CropWindow {
            row,
            col,
            size: self.size,
        }))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub sigma: SigmaParam,
    pub lambda: f64,
    pub pixel_loss: PixelLossKind,
    pub crop: CropPolicy,
    pub timestep_dist: TimestepDistribution,
    pub optimizer: OptimizerConfig,
    pub iterations: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            sigma: SigmaParam::new(0.05).unwrap(),
            lambda: 0.0,
            pixel_loss: PixelLossKind::L2,
            crop: CropPolicy::default(),
            timestep_dist: TimestepDistribution::DiscreteUniform(4),
            optimizer: OptimizerConfig::default(),
            iterations: 5000,
            batch_size: 128,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(LbmError::config("lambda", format!("must be >= 0, got {}", self.lambda)));
        }
        if self.crop.size > self.crop.threshold {
            return Err(LbmError::config(
                "crop_size",
                format!("{} exceeds crop_threshold {}", self.crop.size, self.crop.threshold),
            ));
        }
        if self.crop.size == 0 {
            return Err(LbmError::config("crop_size", "must be >= 1"));
        }
        if self.batch_size == 0 {
            return Err(LbmError::config("batch_size", "must be >= 1"));
        }
        if self.optimizer.lr.is_nan() || self.optimizer.lr <= 0.0 {
            return Err(LbmError::config("lr", "must be > 0"));
        }
        Ok(())
    }
}

/// A scalar objective and its parameter gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct LossGrad {
    pub loss: f64,
    pub grad: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TotalLoss {
    pub bridge: f64,
    pub pixel: f64,
    pub total: f64,
    pub grad: Vec<f64>,
}

/// Inputs of the pixel term.
#[derive(Debug, Clone, Copy)]
pub struct PixelTerm<'a> {
    pub codec: &'a Codec,
    pub x1: &'a TensorBatch,
    pub kind: PixelLossKind,
    pub crop: Option<CropWindow>,
}

fn evaluate_with_grad(
    model: &DriftModel,
    batch: &BridgeBatch,
    bridge_weight: f64,
    pixel: Option<(PixelTerm<'_>, f64)>,
) -> Result<([f64; 2], Vec<f64>)> {
    if batch.is_empty() {
        return Err(LbmError::Empty("bridge batch".into()));
    }
    let cond = batch.cond.as_ref();
    model.validate(&batch.zt, &batch.t, cond)?;
    if batch.drift.data().iter().any(|v| !v.is_finite()) {
        return Err(LbmError::NonFinite("drift targets".into()));
    }
    let n = batch.len();
    let d = model.latent_dim();
    let bridge_scale = 1.0 / (n * d) as f64;
    let latent_shape = batch.zt.sample_shape().to_vec();

    struct PixelSetup<'a> {
        term: PixelTerm<'a>,
        weight: f64,
        image: Vec<usize>,
        scale: f64,
    }
    let pixel = match pixel {
        Some((term, weight)) if term.kind != PixelLossKind::None => {
            let image = term.codec.image_shape(&latent_shape)?;
            if image.as_slice() != term.x1.sample_shape() || term.x1.batch() != n {
                return Err(LbmError::Shape(format!(
                    "decoded shape {image:?} vs target {:?}",
                    term.x1.shape()
                )));
            }
            let per_sample = match (term.crop, image.as_slice()) {
                (Some(cw), [c, h, w]) => {
                    if cw.row + cw.size > *h || cw.col + cw.size > *w {
                        return Err(LbmError::Shape(format!("crop {cw:?} outside {h}x{w} image")));
                    }
                    c * cw.size * cw.size
                }
                _ => image.iter().product(),
            };
            Some(PixelSetup {
                term,
                weight,
                image,
                scale: 1.0 / (n * per_sample) as f64,
            })
        }
        _ => None,
    };

    let net = model.net();
    let (sums, grad) = net.loss_and_grad(
        n,
        |i, buf| fill_input(buf, batch.zt.row(i), batch.t[i], cond.map(|c| c.row(i))),
        |i, out, g| {
            let mut losses = [0.0; 2];
            let target = batch.drift.row(i);
            for ((gj, &o), &y) in g.iter_mut().zip(out).zip(target) {
                let r = o - y as f64;
                losses[0] += r * r * bridge_scale;
                *gj += bridge_weight * 2.0 * r * bridge_scale;
            }
            if let Some(px) = &pixel {
                let ti = batch.t[i] as f64;
                let a = 1.0 - ti;
                let zt = batch.zt.row(i);
                let z_hat: Vec<f64> = out.iter().zip(zt).map(|(&v, &z)| a * v + z as f64).collect();
                let mut x_hat = vec![0.0; px.image.iter().product()];
                px.term.codec.decode_sample(&latent_shape, &z_hat, &mut x_hat);
                let x1 = px.term.x1.row(i);
                let mut gx = vec![0.0; x_hat.len()];
                let mut acc = 0.0;
                let mut visit = |k: usize| {
                    let diff = x_hat[k] - x1[k] as f64;
                    match px.term.kind {
                        PixelLossKind::L2 => {
                            acc += diff * diff;
                            gx[k] = 2.0 * diff * px.scale;
                        }
                        PixelLossKind::L1 => {
                            acc += diff.abs();
                            gx[k] = if diff > 0.0 {
                                px.scale
                            } else if diff < 0.0 {
                                -px.scale
                            } else {
                                0.0
                            };
                        }
                        PixelLossKind::None => {}
                    }
                };
                match (px.term.crop, px.image.as_slice()) {
                    (Some(cw), [c, h, w]) => {
                        for ci in 0..*c {
                            for y in cw.row..cw.row + cw.size {
                                for x in cw.col..cw.col + cw.size {
                                    visit((ci * h + y) * w + x);
                                }
                            }
                        }
                    }
                    _ => (0..x_hat.len()).for_each(&mut visit),
                }
                losses[1] = acc * px.scale;
                let mut gz = vec![0.0; d];
                px.term.codec.decode_adjoint_sample(&latent_shape, &gx, &mut gz);
                for (gj, gzj) in g.iter_mut().zip(&gz) {
                    *gj += px.weight * a * gzj;
                }
            }
            losses
        },
    );
    Ok((sums, grad))
}

/// Mean squared drift error and its gradient.
pub fn lbm_loss(model: &DriftModel, batch: &BridgeBatch) -> Result<LossGrad> {
    let ([bridge, _], grad) = evaluate_with_grad(model, batch, 1.0, None)?;
    Ok(LossGrad { loss: bridge, grad })
}

/// Pixel-space loss of the decoded predicted endpoint and its gradient.
pub fn pixel_loss(model: &DriftModel, batch: &BridgeBatch, term: PixelTerm<'_>) -> Result<LossGrad> {
    if term.kind == PixelLossKind::None {
        return Ok(LossGrad {
            loss: 0.0,
            grad: vec![0.0; model.num_params()],
        });
    }
    let ([_, pixel], grad) = evaluate_with_grad(model, batch, 0.0, Some((term, 1.0)))?;
    Ok(LossGrad { loss: pixel, grad })
}

/// `bridge + lambda * pixel`. With `lambda == 0` the pixel term is not
/// evaluated and the result equals [`lbm_loss`] exactly.
pub fn total_loss(model: &DriftModel, batch: &BridgeBatch, lambda: f64, term: Option<PixelTerm<'_>>) -> Result<TotalLoss> {
    let pixel = match term {
        Some(t) if lambda > 0.0 && t.kind != PixelLossKind::None => Some((t, lambda)),
        _ => None,
    };
    let ([bridge, px], grad) = evaluate_with_grad(model, batch, 1.0, pixel)?;
    Ok(TotalLoss {
        bridge,
        pixel: px,
        total: bridge + lambda * px,
        grad,
    })
}

/// Loss values only (no gradient); used by line-search style checks.
pub fn total_loss_value(model: &DriftModel, batch: &BridgeBatch, lambda: f64, term: Option<PixelTerm<'_>>) -> Result<f64> {
    let pixel = match term {
        Some(t) if lambda > 0.0 && t.kind != PixelLossKind::None => Some((t, lambda)),
        _ => None,
    };
    let ([bridge, px], _) = evaluate_with_grad(model, batch, 1.0, pixel)?;
    Ok(bridge + lambda * px)
}

/// Model widths `[latent + 1 + cond, hidden..., latent]` and condition
/// width for a task/codec pair.
pub fn model_layout(task: &PairedTask, codec: &Codec, hidden: &[usize]) -> Result<(Vec<usize>, usize)> {
    let latent: usize = codec.latent_shape(&task.sample_shape())?.iter().product();
    let cond = match task.cond_shape() {
        Some(cs) => codec.latent_shape(&cs)?.iter().product(),
        None => 0,
    };
    let mut widths = vec![latent + 1 + cond];
    widths.extend_from_slice(hidden);
    widths.push(latent);
    Ok((widths, cond))
}

/// Encoded training batch for one iteration.
#[derive(Debug, Clone)]
pub struct PreparedBatch {
    pub bridge: BridgeBatch,
    pub x1: TensorBatch,
    pub crop: Option<CropWindow>,
}

/// Draw pairs, encode, draw `t` and noise, and build the interpolant.
pub fn prepare_batch(cfg: &TrainConfig, task: &PairedTask, codec: &Codec, stream: &RngStream) -> Result<PreparedBatch> {
    let pairs = task.sample(cfg.batch_size, &mut stream.split(0))?;
    let z0 = codec.encode(&pairs.x0)?;
    let z1 = codec.encode(&pairs.x1)?;
    let cond = pairs.cond.as_ref().map(|c| codec.encode(c)).transpose()?;
    let t = sample_t(&cfg.timestep_dist, cfg.batch_size, &mut stream.split(1))?;
    let eps = gaussian_noise(z0.shape(), &mut stream.split(2))?;
    let crop = cfg.crop.window(pairs.x1.sample_shape(), &mut stream.split(3))?;
    let bridge = BridgeBatch::build(z0, z1, t, cfg.sigma, eps, cond)?;
    Ok(PreparedBatch {
        bridge,
        x1: pairs.x1,
        crop,
    })
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub bridge: Vec<f64>,
    pub pixel: Vec<f64>,
    pub total: Vec<f64>,
    pub wall_clock: Duration,
    pub model: DriftModel,
    /// Batches whose timesteps were checked against the training support.
    pub support_checks: usize,
}

impl TrainReport {
    pub fn iterations(&self) -> usize {
        self.total.len()
    }

    pub fn loss_csv(&self) -> String {
        let mut s = String::from("iteration,bridge_loss,pixel_loss,total_loss\n");
        for i in 0..self.total.len() {
            s.push_str(&format!(
                "{},{},{},{}\n",
                i + 1,
                self.bridge[i],
                self.pixel[i],
                self.total[i]
            ));
        }
        s
    }

    pub fn write_loss_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(self.loss_csv().as_bytes())?;
        Ok(())
    }
}

/// Stream for iteration `i` of a run seeded with `seed`.
pub fn iteration_stream(seed: u64, i: usize) -> RngStream {
    RngStream::new(seed).split(1 + i as u64)
}

/// Stream used to initialize the model of a run seeded with `seed`.
pub fn init_stream(seed: u64) -> RngStream {
    RngStream::new(seed).split(0)
}

/// Run the optimizer for `cfg.iterations` steps starting from `model`.
pub fn train_run(cfg: &TrainConfig, task: &PairedTask, codec: &Codec, mut model: DriftModel) -> Result<TrainReport> {
    cfg.validate()?;
    let start = Instant::now();
    let mut opt = Optimizer::new(cfg.optimizer, model.num_params());
    let mut report = TrainReport {
        bridge: Vec::with_capacity(cfg.iterations),
        pixel: Vec::with_capacity(cfg.iterations),
        total: Vec::with_capacity(cfg.iterations),
        wall_clock: Duration::ZERO,
        model: model.clone(),
        support_checks: 0,
    };
    let use_pixel = cfg.lambda > 0.0 && cfg.pixel_loss != PixelLossKind::None;
    for it in 0..cfg.iterations {
        let prepared = prepare_batch(cfg, task, codec, &iteration_stream(cfg.seed, it))?;
        if let Some(&bad) = prepared.bridge.t.iter().find(|&&t| !cfg.timestep_dist.contains(t)) {
            return Err(LbmError::SupportViolation(bad as f64));
        }
        report.support_checks += 1;
        let term = use_pixel.then_some(PixelTerm {
            codec,
            x1: &prepared.x1,
            kind: cfg.pixel_loss,
            crop: prepared.crop,
        });
        let loss = total_loss(&model, &prepared.bridge, cfg.lambda, term)?;
        if !loss.total.is_finite() || loss.total > DIVERGENCE_LIMIT {
            return Err(LbmError::Divergence {
                iteration: it + 1,
                loss: loss.total,
            });
        }
        opt.step(model.params_mut(), &loss.grad)?;
        report.bridge.push(loss.bridge);
        report.pixel.push(loss.pixel);
        report.total.push(loss.total);
    }
    report.wall_clock = start.elapsed();
    report.model = model;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::param_count;

    fn scalar_batch(zt: &[f32], drift: &[f32], t: &[f32]) -> BridgeBatch {
        let n = zt.len();
        let z = TensorBatch::new(vec![n, 1], zt.to_vec()).unwrap();
        let mut b = BridgeBatch::build(z.clone(), z.clone(), t.to_vec(), SigmaParam::ZERO, z.clone(), None).unwrap();
        b.drift = TensorBatch::new(vec![n, 1], drift.to_vec()).unwrap();
        b
    }

    #[test]
    fn zero_model_mse() {
        let m = DriftModel::from_params(vec![2, 4, 1], 0, vec![0.0; param_count(&[2, 4, 1])]).unwrap();
        let b = scalar_batch(&[0.1, -0.3, 0.7], &[2.0, 2.0, 2.0], &[0.0, 0.25, 0.5]);
        let l = lbm_loss(&m, &b).unwrap();
        assert!((l.loss - 4.0).abs() < 1e-12);
    }

    #[test]
    fn perfect_fit_gives_zero() {
        // single linear layer computing v = z_t exactly
        let m = DriftModel::from_params(vec![2, 1], 0, vec![1.0, 0.0, 0.0]).unwrap();
        let b = scalar_batch(&[0.5, -1.25], &[0.5, -1.25], &[0.0, 0.5]);
        let l = lbm_loss(&m, &b).unwrap();
        assert_eq!(l.loss, 0.0);
        assert!(l.grad.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn permutation_invariant() {
        let m = DriftModel::init(vec![2, 8, 1], 0, &mut RngStream::new(1)).unwrap();
        let a = scalar_batch(&[0.1, 0.2, 0.3], &[1.0, -1.0, 0.5], &[0.0, 0.25, 0.5]);
        let b = scalar_batch(&[0.3, 0.1, 0.2], &[0.5, 1.0, -1.0], &[0.5, 0.0, 0.25]);
        let (la, lb) = (lbm_loss(&m, &a).unwrap(), lbm_loss(&m, &b).unwrap());
        assert!((la.loss - lb.loss).abs() < 1e-12);
        for (x, y) in la.grad.iter().zip(&lb.grad) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_batch_rejected() {
        let m = DriftModel::init(vec![2, 2, 1], 0, &mut RngStream::new(1)).unwrap();
        let mut b = scalar_batch(&[0.1], &[0.1], &[0.0]);
        b.t.clear();
        assert!(lbm_loss(&m, &b).is_err());
    }

    #[test]
    fn l2_pixel_constant_offset() {
        // v = 0 and z_t = x1 + 0.5 with t = 0 gives x1_hat - x1 = 0.5
        let m = DriftModel::from_params(vec![2, 1], 0, vec![0.0; 3]).unwrap();
        let zt = [1.5f32, 0.5, -0.5];
        let x1 = TensorBatch::new(vec![3, 1], vec![1.0, 0.0, -1.0]).unwrap();
        let b = scalar_batch(&zt, &[0.0; 3], &[0.0; 3]);
        let term = PixelTerm {
            codec: &Codec::Identity,
            x1: &x1,
            kind: PixelLossKind::L2,
            crop: None,
        };
        assert!((pixel_loss(&m, &b, term).unwrap().loss - 0.25).abs() < 1e-12);
        let l1 = PixelTerm { kind: PixelLossKind::L1, ..term };
        assert!((pixel_loss(&m, &b, l1).unwrap().loss - 0.5).abs() < 1e-12);
    }

    #[test]
    fn crop_accounting() {
        let policy = CropPolicy { threshold: 8, size: 8 };
        let w = policy.window(&[1, 16, 16], &mut RngStream::new(3)).unwrap().unwrap();
        assert!(w.row <= 8 && w.col <= 8);
        assert!(policy.window(&[1, 8, 8], &mut RngStream::new(3)).unwrap().is_none());
        assert!(policy.window(&[2], &mut RngStream::new(3)).unwrap().is_none());
        let big = CropPolicy { threshold: 4, size: 20 };
        assert!(big.window(&[1, 16, 16], &mut RngStream::new(3)).is_err());

        // exactly 64 of 256 pixels contribute: put error 1.0 only inside
        // the window and 0.0 elsewhere, L1 mean over the crop is then 1.
        let side = 16;
        let m = DriftModel::from_params(vec![side * side + 1, side * side], 0, vec![0.0; (side * side + 1) * side * side + side * side]).unwrap();
        let zt = TensorBatch::zeros(vec![1, 1, side, side]).unwrap();
        let mut x1 = vec![0.0f32; side * side];
        for y in w.row..w.row + 8 {
            for x in w.col..w.col + 8 {
                x1[y * side + x] = 1.0;
            }
        }
        let x1 = TensorBatch::new(vec![1, 1, side, side], x1).unwrap();
        let b = BridgeBatch::build(zt.clone(), zt.clone(), vec![0.0], SigmaParam::ZERO, zt.clone(), None).unwrap();
        let term = PixelTerm {
            codec: &Codec::Identity,
            x1: &x1,
            kind: PixelLossKind::L1,
            crop: Some(w),
        };
        assert!((pixel_loss(&m, &b, term).unwrap().loss - 1.0).abs() < 1e-12);
        let full = PixelTerm { crop: None, ..term };
        assert!((pixel_loss(&m, &b, full).unwrap().loss - 0.25).abs() < 1e-12);
    }

    #[test]
    fn total_is_weighted_sum() {
        let m = DriftModel::init(vec![2, 8, 1], 0, &mut RngStream::new(2)).unwrap();
        let b = scalar_batch(&[0.1, 0.2], &[1.0, -1.0], &[0.0, 0.5]);
        let x1 = TensorBatch::new(vec![2, 1], vec![0.3, 0.4]).unwrap();
        let term = PixelTerm {
            codec: &Codec::Identity,
            x1: &x1,
            kind: PixelLossKind::L2,
            crop: None,
        };
        let zero = total_loss(&m, &b, 0.0, Some(term)).unwrap();
        let plain = lbm_loss(&m, &b).unwrap();
        assert_eq!(zero.total, plain.loss);
        assert_eq!(zero.grad, plain.grad);
        let ten = total_loss(&m, &b, 10.0, Some(term)).unwrap();
        let px = pixel_loss(&m, &b, term).unwrap();
        assert!((ten.total - (plain.loss + 10.0 * px.loss)).abs() < 1e-12);
        for ((g, a), p) in ten.grad.iter().zip(&plain.grad).zip(&px.grad) {
            assert!((g - (a + 10.0 * p)).abs() < 1e-10);
        }
    }

    #[test]
    fn zero_iterations_is_noop() {
        let task = crate::data::gauss1d(0.0, 1.0, 2.0, 1.0).unwrap();
        let m = DriftModel::init(vec![2, 8, 1], 0, &mut RngStream::new(2)).unwrap();
        let cfg = TrainConfig {
            iterations: 0,
            ..TrainConfig::default()
        };
        let r = train_run(&cfg, &task, &Codec::Identity, m.clone()).unwrap();
        assert!(r.total.is_empty());
        assert_eq!(r.model, m);
        assert_eq!(r.loss_csv(), "iteration,bridge_loss,pixel_loss,total_loss\n");
    }

    #[test]
    fn divergence_aborts() {
        let task = crate::data::gauss1d(0.0, 1.0, 2000.0, 1.0).unwrap();
        let m = DriftModel::init(vec![2, 8, 1], 0, &mut RngStream::new(2)).unwrap();
        let cfg = TrainConfig {
            iterations: 3,
            ..TrainConfig::default()
        };
        let err = train_run(&cfg, &task, &Codec::Identity, m).unwrap_err();
        assert!(matches!(err, LbmError::Divergence { iteration: 1, .. }), "{err}");
    }

    #[test]
    fn config_validation() {
        let mut cfg = TrainConfig {
            crop: CropPolicy { threshold: 4, size: 8 },
            ..TrainConfig::default()
        };
        assert!(cfg.validate().is_err());
        cfg.crop = CropPolicy::default();
        cfg.lambda = -1.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn layout_for_tasks() {
        let (w, c) = model_layout(&"shadow12".parse().unwrap(), &Codec::AvgPool(2), &[64]).unwrap();
        assert_eq!(w, vec![36 + 1 + 36, 64, 36]);
        assert_eq!(c, 36);
        let (w, c) = model_layout(&"rings2d".parse().unwrap(), &Codec::Identity, &[128, 128]).unwrap();
        assert_eq!(w, vec![3, 128, 128, 2]);
        assert_eq!(c, 0);
    }
}
