//! Euler–Maruyama integration of the bridge SDE with a learned (or
//! analytic) drift.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use crate::bridge::SigmaParam;
use crate::codec::Codec;
use crate::error::{LbmError, Result};
use crate::model::DriftModel;
use crate::rng::RngStream;
use crate::schedule::InferenceGrid;
use crate::tensor::{gaussian_noise, TensorBatch};

/// Anything that yields a drift for a batch of states at per-row times.
pub trait DriftField: Sync {
    fn drift(&self, zt: &TensorBatch, t: &[f32], cond: Option<&TensorBatch>) -> Result<TensorBatch>;
}

impl DriftField for DriftModel {
    fn drift(&self, zt: &TensorBatch, t: &[f32], cond: Option<&TensorBatch>) -> Result<TensorBatch> {
        self.forward(zt, t, cond)
    }
}

/// Wraps a drift field and records every evaluation.
pub struct CountingDrift<'a, D: DriftField + ?Sized> {
    inner: &'a D,
    calls: AtomicUsize,
    times: Mutex<Vec<f32>>,
}

impl<'a, D: DriftField + ?Sized> CountingDrift<'a, D> {
    pub fn new(inner: &'a D) -> Self {
        Self {
            inner,
            calls: AtomicUsize::new(0),
            times: Mutex::new(Vec::new()),
        }
    }

    /// Number of function evaluations so far.
    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    /// Distinct times at which the field was evaluated, in call order.
    pub fn times(&self) -> Vec<f32> {
        self.times.lock().unwrap().clone()
    }
}

impl<D: DriftField + ?Sized> DriftField for CountingDrift<'_, D> {
    fn drift(&self, zt: &TensorBatch, t: &[f32], cond: Option<&TensorBatch>) -> Result<TensorBatch> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        {
            let mut seen = self.times.lock().unwrap();
            for &ti in t {
                if !seen.contains(&ti) {
                    seen.push(ti);
                }
            }
        }
        self.inner.drift(zt, t, cond)
    }
}

/// `z + v dt + sigma sqrt(dt) xi`. With `sigma == 0` the noise is not read.
pub fn em_step(
    field: &(impl DriftField + ?Sized),
    zt: &TensorBatch,
    t: f64,
    dt: f64,
    sigma: SigmaParam,
    xi: Option<&TensorBatch>,
    cond: Option<&TensorBatch>,
) -> Result<TensorBatch> {
    if t + dt > 1.0 + 1e-9 {
        return Err(LbmError::Schedule(format!("step from {t} by {dt} overshoots t = 1")));
    }
    if dt <= 0.0 || t < 0.0 {
        return Err(LbmError::Schedule(format!("invalid step t = {t}, dt = {dt}")));
    }
    let times = vec![t as f32; zt.batch()];
    let v = field.drift(zt, &times, cond)?;
    zt.same_shape(&v, "drift output")?;
    let out: Vec<f32> = if sigma.is_deterministic() {
        zt.data()
            .iter()
            .zip(v.data())
            .map(|(&z, &d)| (z as f64 + d as f64 * dt) as f32)
            .collect()
    } else {
        let xi = xi.ok_or_else(|| LbmError::Empty("noise for a stochastic step".into()))?;
        zt.same_shape(xi, "step noise")?;
        let scale = sigma.get() * dt.sqrt();
        zt.data()
            .iter()
            .zip(v.data())
            .zip(xi.data())
            .map(|((&z, &d), &e)| (z as f64 + d as f64 * dt + scale * e as f64) as f32)
            .collect()
    };
    TensorBatch::new(zt.shape().to_vec(), out).map_err(|_| LbmError::NonFinite("em_step".into()))
}

#[derive(Debug, Clone)]
pub struct SolverRun {
    pub output: TensorBatch,
    /// States at every grid point plus the terminal one, when recorded.
    pub trajectory: Option<Vec<TensorBatch>>,
}

/// Integrate from `t = 0` to `t = 1` over `grid`. Step `k` draws its
/// noise from `stream.split(k)`.
pub fn sample_path(
    field: &(impl DriftField + ?Sized),
    z0: &TensorBatch,
    grid: &InferenceGrid,
    sigma: SigmaParam,
    stream: &RngStream,
    cond: Option<&TensorBatch>,
    record: bool,
) -> Result<SolverRun> {
    let mut z = z0.clone();
    let mut trajectory = record.then(|| vec![z.clone()]);
    for (k, (t, dt)) in grid.iter().enumerate() {
        let xi = if sigma.is_deterministic() {
            None
        } else {
            Some(gaussian_noise(z.shape(), &mut stream.split(k as u64))?)
        };
        z = em_step(field, &z, t, dt, sigma, xi.as_ref(), cond)?;
        if let Some(tr) = trajectory.as_mut() {
            tr.push(z.clone());
        }
    }
    Ok(SolverRun {
        output: z,
        trajectory,
    })
}

/// Encode `x0` (and the condition), integrate, decode.
pub fn translate(
    field: &(impl DriftField + ?Sized),
    codec: &Codec,
    x0: &TensorBatch,
    grid: &InferenceGrid,
    sigma: SigmaParam,
    stream: &RngStream,
    cond: Option<&TensorBatch>,
) -> Result<TensorBatch> {
    let z0 = codec.encode(x0)?;
    let zc = cond.map(|c| codec.encode(c)).transpose()?;
    let run = sample_path(field, &z0, grid, sigma, stream, zc.as_ref(), false)?;
    codec.decode(&run.output)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bridge::drift_target;
    use crate::model::param_count;
    use crate::schedule::{inference_grid, TimestepDistribution};

    /// Exact pair-conditional drift towards fixed endpoints.
    struct Towards(TensorBatch);

    impl DriftField for Towards {
        fn drift(&self, zt: &TensorBatch, t: &[f32], _c: Option<&TensorBatch>) -> Result<TensorBatch> {
            drift_target(&self.0, zt, t)
        }
    }

    struct Zero;

    impl DriftField for Zero {
        fn drift(&self, zt: &TensorBatch, _t: &[f32], _c: Option<&TensorBatch>) -> Result<TensorBatch> {
            TensorBatch::zeros(zt.shape().to_vec())
        }
    }

    fn pt(v: &[f32]) -> TensorBatch {
        TensorBatch::new(vec![v.len(), 1], v.to_vec()).unwrap()
    }

    #[test]
    fn deterministic_step_ignores_noise() {
        let m = DriftModel::init(vec![2, 4, 1], 0, &mut RngStream::new(1)).unwrap();
        let z = pt(&[0.5, -1.0]);
        let a = em_step(&m, &z, 0.25, 0.25, SigmaParam::ZERO, Some(&pt(&[1.0, 2.0])), None).unwrap();
        let b = em_step(&m, &z, 0.25, 0.25, SigmaParam::ZERO, None, None).unwrap();
        assert_eq!(a, b);
        let v = m.forward(&z, &[0.25, 0.25], None).unwrap();
        for i in 0..2 {
            assert_eq!(a.data()[i], (z.data()[i] as f64 + v.data()[i] as f64 * 0.25) as f32);
        }
    }

    #[test]
    fn stationary_with_zero_drift() {
        let z = pt(&[0.5, -1.0, 3.0]);
        let out = em_step(&Zero, &z, 0.0, 0.5, SigmaParam::ZERO, None, None).unwrap();
        assert_eq!(out, z);
        let zero_model = DriftModel::from_params(vec![2, 1], 0, vec![0.0; param_count(&[2, 1])]).unwrap();
        assert_eq!(em_step(&zero_model, &z, 0.0, 1.0, SigmaParam::ZERO, None, None).unwrap(), z);
    }

    #[test]
    fn single_step_lands_on_target() {
        let z0 = pt(&[1.0, -0.5, 0.25]);
        let z1 = pt(&[3.0, 2.5, -4.0]);
        let out = em_step(&Towards(z1.clone()), &z0, 0.0, 1.0, SigmaParam::ZERO, None, None).unwrap();
        assert_eq!(out, z1);
        let g = inference_grid(&TimestepDistribution::DiscreteUniform(4), 1).unwrap();
        let run = sample_path(&Towards(z1.clone()), &z0, &g, SigmaParam::ZERO, &RngStream::new(0), None, false).unwrap();
        assert_eq!(run.output, z1);
    }

    #[test]
    fn overshoot_rejected() {
        let z = pt(&[0.0]);
        assert!(matches!(
            em_step(&Zero, &z, 0.75, 0.5, SigmaParam::ZERO, None, None),
            Err(LbmError::Schedule(_))
        ));
    }

    #[test]
    fn counting_and_alignment() {
        let d = TimestepDistribution::DiscreteUniform(4);
        let counter = CountingDrift::new(&Zero);
        let z = pt(&[0.0; 5]);
        for k in 1..=4 {
            let g = inference_grid(&d, k).unwrap();
            let before = counter.calls();
            sample_path(&counter, &z, &g, SigmaParam::new(0.1).unwrap(), &RngStream::new(1), None, false).unwrap();
            assert_eq!(counter.calls() - before, k);
        }
        let c4 = CountingDrift::new(&Zero);
        sample_path(&c4, &z, &inference_grid(&d, 4).unwrap(), SigmaParam::ZERO, &RngStream::new(1), None, false).unwrap();
        assert_eq!(c4.times(), vec![0.0, 0.25, 0.5, 0.75]);
    }

    #[test]
    fn trajectory_length() {
        let g = InferenceGrid::equally_spaced(3).unwrap();
        let run = sample_path(&Zero, &pt(&[1.0]), &g, SigmaParam::ZERO, &RngStream::new(0), None, true).unwrap();
        assert_eq!(run.trajectory.unwrap().len(), 4);
    }

    #[test]
    fn ode_is_seed_independent_sde_is_not() {
        let m = DriftModel::init(vec![3, 8, 2], 0, &mut RngStream::new(4)).unwrap();
        let z = TensorBatch::zeros(vec![64, 2]).unwrap();
        let g = InferenceGrid::equally_spaced(4).unwrap();
        let a = sample_path(&m, &z, &g, SigmaParam::ZERO, &RngStream::new(1), None, false).unwrap();
        let b = sample_path(&m, &z, &g, SigmaParam::ZERO, &RngStream::new(2), None, false).unwrap();
        assert_eq!(a.output, b.output);
        let s = SigmaParam::new(0.2).unwrap();
        let c = sample_path(&m, &z, &g, s, &RngStream::new(1), None, false).unwrap();
        let d = sample_path(&m, &z, &g, s, &RngStream::new(2), None, false).unwrap();
        assert_ne!(c.output, d.output);
        // fixed start, so any spread comes from the noise
        let col: Vec<f64> = c.output.rows().map(|r| r[0] as f64).collect();
        let mean = col.iter().sum::<f64>() / col.len() as f64;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / col.len() as f64;
        assert!(var > 0.0);
    }

    #[test]
    fn translate_identity_pipeline() {
        let x = crate::tensor::gaussian_noise(&[6, 2], &mut RngStream::new(3)).unwrap();
        let g = InferenceGrid::equally_spaced(4).unwrap();
        let out = translate(&Zero, &Codec::Identity, &x, &g, SigmaParam::ZERO, &RngStream::new(0), None).unwrap();
        assert_eq!(out, x);
    }
}
