//! Training timestep laws and the inference grids aligned with them.

use std::fmt;
use std::str::FromStr;

use crate::error::{LbmError, Result};
use crate::rng::RngStream;

/// Upper end of every support; `t = 1` is never trained on.
pub const T_SUPPORT_MAX: f64 = 0.99;

#[derive(Debug, Clone, PartialEq)]
pub enum TimestepDistribution {
    /// Continuous uniform on `[0, 0.99)`.
    Uniform,
    /// Equal mass on `{i / k : i = 0..k}`.
    DiscreteUniform(usize),
    /// Arbitrary finite law; support strictly increasing.
    Weighted { support: Vec<f64>, weights: Vec<f64> },
}

impl TimestepDistribution {
    pub fn discrete(k: usize) -> Result<Self> {
        if k == 0 {
            return Err(LbmError::Schedule("discrete distribution needs k >= 1".into()));
        }
        if (k - 1) as f64 / k as f64 > T_SUPPORT_MAX {
            return Err(LbmError::Schedule(format!(
                "discrete:{k} puts mass above t = {T_SUPPORT_MAX}"
            )));
        }
        Ok(Self::DiscreteUniform(k))
    }

    pub fn weighted(mut pairs: Vec<(f64, f64)>) -> Result<Self> {
        if pairs.is_empty() {
            return Err(LbmError::Schedule("empty support".into()));
        }
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        if pairs.windows(2).any(|w| w[0].0 >= w[1].0) {
            return Err(LbmError::Schedule("support values must be distinct".into()));
        }
        for &(t, w) in &pairs {
            if !(0.0..=T_SUPPORT_MAX).contains(&t) {
                return Err(LbmError::Schedule(format!("support value {t} outside [0, {T_SUPPORT_MAX}]")));
            }
            if !(w >= 0.0 && w.is_finite()) {
                return Err(LbmError::Schedule(format!("negative weight {w}")));
            }
        }
        let total: f64 = pairs.iter().map(|p| p.1).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(LbmError::Schedule(format!("weights sum to {total}, not 1")));
        }
        let (support, weights) = pairs.into_iter().unzip();
        Ok(Self::Weighted { support, weights })
    }

    /// Support points for discrete kinds, ascending.
    pub fn support(&self) -> Option<Vec<f64>> {
        match self {
            Self::Uniform => None,
            Self::DiscreteUniform(k) => Some((0..*k).map(|i| i as f64 / *k as f64).collect()),
            Self::Weighted { support, .. } => Some(support.clone()),
        }
    }

    pub fn weights(&self) -> Option<Vec<f64>> {
        match self {
            Self::Uniform => None,
            Self::DiscreteUniform(k) => Some(vec![1.0 / *k as f64; *k]),
            Self::Weighted { weights, .. } => Some(weights.clone()),
        }
    }

    /// Whether `t` carries probability mass (always true for `Uniform`
    /// inside its range).
    pub fn contains(&self, t: f32) -> bool {
        match self.support() {
            None => (0.0..T_SUPPORT_MAX).contains(&(t as f64)),
            Some(s) => s.iter().any(|&v| v as f32 == t),
        }
    }
}

impl fmt::Display for TimestepDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Uniform => write!(f, "uniform"),
            Self::DiscreteUniform(k) => write!(f, "discrete:{k}"),
            Self::Weighted { support, weights } => {
                let parts: Vec<String> = support
                    .iter()
                    .zip(weights)
                    .map(|(t, w)| format!("{t}@{w}"))
                    .collect();
                write!(f, "weighted:{}", parts.join(","))
            }
        }
    }
}

impl FromStr for TimestepDistribution {
    type Err = LbmError;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "uniform" {
            return Ok(Self::Uniform);
        }
        if let Some(k) = s.strip_prefix("discrete:") {
            let k: usize = k
                .trim()
                .parse()
                .map_err(|_| LbmError::Schedule(format!("bad discrete count in {s:?}")))?;
            return Self::discrete(k);
        }
        if let Some(rest) = s.strip_prefix("weighted:") {
            let mut pairs = Vec::new();
            for item in rest.split(',') {
                let (t, w) = item
                    .split_once('@')
                    .ok_or_else(|| LbmError::Schedule(format!("expected t@weight, got {item:?}")))?;
                let t: f64 = t.trim().parse().map_err(|_| LbmError::Schedule(format!("bad t {t:?}")))?;
                let w: f64 = w.trim().parse().map_err(|_| LbmError::Schedule(format!("bad weight {w:?}")))?;
                pairs.push((t, w));
            }
            return Self::weighted(pairs);
        }
        Err(LbmError::Schedule(format!(
            "unknown timestep distribution {s:?} (uniform | discrete:K | weighted:t@w,...)"
        )))
    }
}

/// Draw `n` timesteps.
pub fn sample_t(dist: &TimestepDistribution, n: usize, stream: &mut RngStream) -> Result<Vec<f32>> {
    if n == 0 {
        return Err(LbmError::Empty("sample_t with n = 0".into()));
    }
    match dist {
        TimestepDistribution::Uniform => Ok((0..n)
            .map(|_| (stream.uniform() * T_SUPPORT_MAX) as f32)
            .collect()),
        TimestepDistribution::DiscreteUniform(k) => {
            if *k == 0 {
                return Err(LbmError::Schedule("empty support".into()));
            }
            Ok((0..n)
                .map(|_| (stream.below(*k as u64) as f64 / *k as f64) as f32)
                .collect())
        }
        TimestepDistribution::Weighted { support, weights } => {
            if support.is_empty() {
                return Err(LbmError::Schedule("empty support".into()));
            }
            let mut cdf = Vec::with_capacity(weights.len());
            let mut acc = 0.0;
            for w in weights {
                acc += w;
                cdf.push(acc);
            }
            Ok((0..n)
                .map(|_| {
                    let u = stream.uniform() * acc;
                    let i = cdf.partition_point(|&c| c <= u).min(support.len() - 1);
                    support[i] as f32
                })
                .collect())
        }
    }
}

/// Evaluation times and step sizes for an explicit solver.
#[derive(Debug, Clone, PartialEq)]
pub struct InferenceGrid {
    times: Vec<f64>,
    deltas: Vec<f64>,
}

impl InferenceGrid {
    /// Grid on the given left endpoints; the final step ends at `t = 1`.
    ///
    /// The last delta is `1 - (sum of the others)`, so the sequential sum
    /// of all deltas is exactly one.
    pub fn from_times(times: Vec<f64>) -> Result<Self> {
        if times.is_empty() {
            return Err(LbmError::Schedule("grid needs at least one step".into()));
        }
        if times[0] != 0.0 {
            return Err(LbmError::Schedule("grid must start at t = 0".into()));
        }
        if times.windows(2).any(|w| w[0] >= w[1]) || *times.last().unwrap() >= 1.0 {
            return Err(LbmError::Schedule("grid times must increase inside [0, 1)".into()));
        }
        let mut deltas: Vec<f64> = times.windows(2).map(|w| w[1] - w[0]).collect();
        let used: f64 = deltas.iter().sum();
        deltas.push(1.0 - used);
        Ok(Self { times, deltas })
    }

    /// `{i / steps}`.
    pub fn equally_spaced(steps: usize) -> Result<Self> {
        if steps == 0 {
            return Err(LbmError::Schedule("steps must be >= 1".into()));
        }
        Self::from_times((0..steps).map(|i| i as f64 / steps as f64).collect())
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn deltas(&self) -> &[f64] {
        &self.deltas
    }

    pub fn steps(&self) -> usize {
        self.times.len()
    }

    pub fn terminal(&self) -> f64 {
        self.times.last().unwrap() + self.deltas.last().unwrap()
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.times.iter().copied().zip(self.deltas.iter().copied())
    }
}

/// Step grid aligned with the training law.
///
/// Discrete laws cap the step count at the support size; with exactly that
/// many steps the grid is the support itself.
pub fn inference_grid(dist: &TimestepDistribution, steps: usize) -> Result<InferenceGrid> {
    if steps == 0 {
        return Err(LbmError::Schedule("steps must be >= 1".into()));
    }
    match dist.support() {
        None => InferenceGrid::equally_spaced(steps),
        Some(support) => {
            if steps > support.len() {
                return Err(LbmError::Schedule(format!(
                    "{steps} steps requested but the training law only has {} timesteps",
                    support.len()
                )));
            }
            if steps == support.len() {
                InferenceGrid::from_times(support)
            } else {
                InferenceGrid::equally_spaced(steps)
            }
        }
    }
}
