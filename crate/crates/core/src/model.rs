//! Reference drift network `v(z_t, t, c)`: a tanh MLP with a linear head.
//!
//! Input row layout is `[flatten(z_t), t, flatten(c)]`. Parameters are one
//! flat vector; for each layer in order, the weight matrix (row-major,
//! `out x in`) followed by the bias vector.
//!
//! Parameters are stored as f32. All arithmetic runs in f64.

use crate::error::{LbmError, Result};
use crate::par;
use crate::rng::RngStream;
use crate::tensor::TensorBatch;

/// Samples per parallel work item. Fixed so that reductions happen in the
/// same order regardless of thread count.
const CHUNK: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct DriftModel {
    widths: Vec<usize>,
    cond_dim: usize,
    params: Vec<f32>,
}

/// `sum(w_in * w_out + w_out)` over consecutive layers.
pub fn param_count(widths: &[usize]) -> usize {
    widths.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

fn check_widths(widths: &[usize], cond_dim: usize) -> Result<()> {
    if widths.len() < 2 {
        return Err(LbmError::Model("need at least input and output widths".into()));
    }
    if widths.contains(&0) {
        return Err(LbmError::Model(format!("zero width in {widths:?}")));
    }
    let latent = *widths.last().unwrap();
    if widths[0] != latent + 1 + cond_dim {
        return Err(LbmError::Model(format!(
            "input width {} != latent {latent} + 1 + cond {cond_dim}",
            widths[0]
        )));
    }
    Ok(())
}

impl DriftModel {
    pub fn from_params(widths: Vec<usize>, cond_dim: usize, params: Vec<f32>) -> Result<Self> {
        check_widths(&widths, cond_dim)?;
        let expected = param_count(&widths);
        if params.len() != expected {
            return Err(LbmError::Model(format!(
                "widths {widths:?} need {expected} params, got {}",
                params.len()
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(LbmError::NonFinite("model parameters".into()));
        }
        Ok(Self {
            widths,
            cond_dim,
            params,
        })
    }

    /// Weights `~ N(0, 1 / fan_in)`, biases zero.
    pub fn init(widths: Vec<usize>, cond_dim: usize, stream: &mut RngStream) -> Result<Self> {
        check_widths(&widths, cond_dim)?;
        let mut params = Vec::with_capacity(param_count(&widths));
        for w in widths.windows(2) {
            let std = 1.0 / (w[0] as f64).sqrt();
            params.extend((0..w[0] * w[1]).map(|_| (stream.normal() * std) as f32));
            params.extend(std::iter::repeat_n(0.0f32, w[1]));
        }
        Ok(Self {
            widths,
            cond_dim,
            params,
        })
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn cond_dim(&self) -> usize {
        self.cond_dim
    }

    pub fn latent_dim(&self) -> usize {
        *self.widths.last().unwrap()
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn params(&self) -> &[f32] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f32] {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    /// Range of the bias block of layer `l` inside the flat vector.
    pub fn bias_range(&self, layer: usize) -> std::ops::Range<usize> {
        let mut off = 0;
        for (l, w) in self.widths.windows(2).enumerate() {
            off += w[0] * w[1];
            if l == layer {
                return off..off + w[1];
            }
            off += w[1];
        }
        panic!("layer {layer} out of range");
    }

    fn check_inputs(&self, zt: &TensorBatch, t: &[f32], cond: Option<&TensorBatch>) -> Result<()> {
        if zt.row_len() != self.latent_dim() {
            return Err(LbmError::Model(format!(
                "latent row has {} values, model expects {}",
                zt.row_len(),
                self.latent_dim()
            )));
        }
        if t.len() != zt.batch() {
            return Err(LbmError::Shape(format!("{} timesteps for {} rows", t.len(), zt.batch())));
        }
        match (cond, self.cond_dim) {
            (None, 0) => Ok(()),
            (None, d) => Err(LbmError::Model(format!("model expects a {d}-wide condition"))),
            (Some(_), 0) => Err(LbmError::Model("condition given to an unconditional model".into())),
            (Some(c), d) => {
                if c.row_len() != d || c.batch() != zt.batch() {
                    return Err(LbmError::Model(format!(
                        "condition shape {:?} does not match cond dim {d} / batch {}",
                        c.shape(),
                        zt.batch()
                    )));
                }
                Ok(())
            }
        }
    }

    pub(crate) fn net(&self) -> Net {
        Net {
            widths: self.widths.clone(),
            params: self.params.iter().map(|&p| p as f64).collect(),
        }
    }

    /// Drift prediction at full f64 precision, row-major `[n, latent]`.
    pub fn forward_f64(&self, zt: &TensorBatch, t: &[f32], cond: Option<&TensorBatch>) -> Result<Vec<f64>> {
        self.check_inputs(zt, t, cond)?;
        let net = self.net();
        let d = self.latent_dim();
        let n = zt.batch();
        let chunks = par::map_range(par::chunk_count(n, CHUNK), |ci| {
            let mut acts = net.activations();
            let mut out = Vec::with_capacity(CHUNK * d);
            let lo = ci * CHUNK;
            for (i, &ti) in t.iter().enumerate().take((lo + CHUNK).min(n)).skip(lo) {
                fill_input(&mut acts[0], zt.row(i), ti, cond.map(|c| c.row(i)));
                net.forward_row(&mut acts);
                out.extend_from_slice(acts.last().unwrap());
            }
            out
        });
        Ok(chunks.concat())
    }

    pub fn forward(&self, zt: &TensorBatch, t: &[f32], cond: Option<&TensorBatch>) -> Result<TensorBatch> {
        let out = self.forward_f64(zt, t, cond)?;
        TensorBatch::from_f64(zt.shape().to_vec(), &out)
            .map_err(|_| LbmError::NonFinite("model forward".into()))
    }

    /// Gradient of `<forward(zt, t, c), upstream>` with respect to the
    /// parameters.
    pub fn backward(
        &self,
        zt: &TensorBatch,
        t: &[f32],
        cond: Option<&TensorBatch>,
        upstream: &TensorBatch,
    ) -> Result<Vec<f64>> {
        self.check_inputs(zt, t, cond)?;
        zt.same_shape(upstream, "backward upstream")?;
        let net = self.net();
        let (_, grad) = net.loss_and_grad(
            zt.batch(),
            |i, buf| fill_input(buf, zt.row(i), t[i], cond.map(|c| c.row(i))),
            |i, _out, g| {
                for (gj, &u) in g.iter_mut().zip(upstream.row(i)) {
                    *gj = u as f64;
                }
                [0.0; 2]
            },
        );
        Ok(grad)
    }

    /// Validate `zt`, `t` and `cond` against this model.
    pub(crate) fn validate(&self, zt: &TensorBatch, t: &[f32], cond: Option<&TensorBatch>) -> Result<()> {
        self.check_inputs(zt, t, cond)
    }
}

pub(crate) fn fill_input(buf: &mut [f64], z: &[f32], t: f32, c: Option<&[f32]>) {
    let d = z.len();
    for (b, &v) in buf[..d].iter_mut().zip(z) {
        *b = v as f64;
    }
    buf[d] = t as f64;
    if let Some(c) = c {
        for (b, &v) in buf[d + 1..].iter_mut().zip(c) {
            *b = v as f64;
        }
    }
}

/// f64 working copy of a model.
pub(crate) struct Net {
    widths: Vec<usize>,
    params: Vec<f64>,
}

impl Net {
    pub(crate) fn activations(&self) -> Vec<Vec<f64>> {
        self.widths.iter().map(|&w| vec![0.0; w]).collect()
    }

    /// `acts[0]` holds the input; fills every later layer.
    pub(crate) fn forward_row(&self, acts: &mut [Vec<f64>]) {
        let layers = self.widths.len() - 1;
        let mut off = 0;
        for l in 0..layers {
            let (n_in, n_out) = (self.widths[l], self.widths[l + 1]);
            let (w, rest) = self.params[off..].split_at(n_in * n_out);
            let b = &rest[..n_out];
            off += n_in * n_out + n_out;
            let (head, tail) = acts.split_at_mut(l + 1);
            let x = &head[l];
            let y = &mut tail[0];
            for (o, yo) in y.iter_mut().enumerate() {
                let row = &w[o * n_in..(o + 1) * n_in];
                let s: f64 = row.iter().zip(x.iter()).map(|(a, b)| a * b).sum::<f64>() + b[o];
                *yo = if l + 1 < layers { s.tanh() } else { s };
            }
        }
    }

    /// Accumulate the parameter gradient for one row given `dL/d(output)`
    /// in `delta` (overwritten).
    fn backward_row(&self, acts: &[Vec<f64>], delta: &mut Vec<f64>, scratch: &mut Vec<f64>, grad: &mut [f64]) {
        let layers = self.widths.len() - 1;
        let mut offsets = Vec::with_capacity(layers);
        let mut off = 0;
        for l in 0..layers {
            offsets.push(off);
            off += self.widths[l] * self.widths[l + 1] + self.widths[l + 1];
        }
        for l in (0..layers).rev() {
            let (n_in, n_out) = (self.widths[l], self.widths[l + 1]);
            let off = offsets[l];
            let x = &acts[l];
            {
                let (gw, gb) = grad[off..off + n_in * n_out + n_out].split_at_mut(n_in * n_out);
                for o in 0..n_out {
                    let d = delta[o];
                    if d == 0.0 {
                        continue;
                    }
                    gb[o] += d;
                    for (g, &xi) in gw[o * n_in..(o + 1) * n_in].iter_mut().zip(x) {
                        *g += d * xi;
                    }
                }
            }
            if l == 0 {
                break;
            }
            let w = &self.params[off..off + n_in * n_out];
            scratch.clear();
            scratch.resize(n_in, 0.0);
            for o in 0..n_out {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                for (s, &wv) in scratch.iter_mut().zip(&w[o * n_in..(o + 1) * n_in]) {
                    *s += d * wv;
                }
            }
            // tanh' = 1 - tanh^2, using the stored post-activation
            for (s, &a) in scratch.iter_mut().zip(x) {
                *s *= 1.0 - a * a;
            }
            std::mem::swap(delta, scratch);
        }
    }

    /// Run forward on `n` rows; `head(i, output, dl_dout)` writes the
    /// output gradient and returns the row's contribution to two loss
    /// terms. Returns the summed terms and the parameter gradient.
    pub(crate) fn loss_and_grad<I, H>(&self, n: usize, input: I, head: H) -> ([f64; 2], Vec<f64>)
    where
        I: Fn(usize, &mut [f64]) + Sync + Send,
        H: Fn(usize, &[f64], &mut [f64]) -> [f64; 2] + Sync + Send,
    {
        let p = self.params.len();
        let d_out = *self.widths.last().unwrap();
        let parts = par::map_range(par::chunk_count(n, CHUNK), |ci| {
            let mut acts = self.activations();
            let mut grad = vec![0.0; p];
            let mut delta = vec![0.0; d_out];
            let mut scratch = Vec::new();
            let mut loss = [0.0; 2];
            for i in ci * CHUNK..((ci + 1) * CHUNK).min(n) {
                input(i, &mut acts[0]);
                self.forward_row(&mut acts);
                delta.clear();
                delta.resize(d_out, 0.0);
                let l = head(i, acts.last().unwrap(), &mut delta);
                loss[0] += l[0];
                loss[1] += l[1];
                if delta.iter().any(|&g| g != 0.0) {
                    self.backward_row(&acts, &mut delta, &mut scratch, &mut grad);
                }
            }
            (loss, grad)
        });
        let mut total = [0.0; 2];
        let mut grad = vec![0.0; p];
        for (l, g) in parts {
            total[0] += l[0];
            total[1] += l[1];
            for (a, b) in grad.iter_mut().zip(&g) {
                *a += b;
            }
        }
        (total, grad)
    }
}
