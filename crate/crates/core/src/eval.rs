//! Sample-based distances and paired metrics.

use crate::error::{LbmError, Result};
use crate::par;
use crate::rng::RngStream;
use crate::tensor::TensorBatch;

/// One metric row: `metric,value,stderr`.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub name: String,
    pub value: f64,
    pub stderr: Option<f64>,
}

impl MetricReport {
    pub fn new(name: impl Into<String>, value: f64) -> Self {
        Self {
            name: name.into(),
            value,
            stderr: None,
        }
    }

    pub fn with_stderr(mut self, stderr: f64) -> Self {
        self.stderr = Some(stderr);
        self
    }

    pub fn csv_row(&self) -> String {
        let se = self.stderr.map(|s| s.to_string()).unwrap_or_default();
        format!("{},{},{}", self.name, self.value, se)
    }
}

pub fn metrics_csv(rows: &[MetricReport]) -> String {
    let mut s = String::from("metric,value,stderr\n");
    for r in rows {
        s.push_str(&r.csv_row());
        s.push('\n');
    }
    s
}

fn dist(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

/// Mean pairwise distance between the rows of `a` and `b`.
fn mean_cross(a: &TensorBatch, b: &TensorBatch) -> f64 {
    let sums = par::map_range(a.batch(), |i| {
        let ai = a.row(i);
        b.rows().map(|bj| dist(ai, bj)).sum::<f64>()
    });
    sums.iter().sum::<f64>() / (a.batch() * b.batch()) as f64
}

/// V-statistic `2 E|A-B| - E|A-A'| - E|B-B'|`.
pub fn energy_distance(a: &TensorBatch, b: &TensorBatch) -> Result<f64> {
    if a.row_len() != b.row_len() {
        return Err(LbmError::Shape(format!(
            "energy distance needs equal feature dims, got {} and {}",
            a.row_len(),
            b.row_len()
        )));
    }
    if a.batch() < 2 || b.batch() < 2 {
        return Err(LbmError::Empty("energy distance needs at least 2 samples per set".into()));
    }
    let ed = 2.0 * mean_cross(a, b) - mean_cross(a, a) - mean_cross(b, b);
    Ok(ed.max(0.0))
}

/// Draw `m` row indices out of `n` without replacement.
fn subsample(n: usize, m: usize, stream: &mut RngStream) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    for i in 0..m {
        let j = i + stream.below((n - i) as u64) as usize;
        idx.swap(i, j);
    }
    idx.truncate(m);
    idx
}

fn sorted_projection(x: &TensorBatch, rows: &[usize], theta: &[f64]) -> Vec<f64> {
    let mut p: Vec<f64> = rows
        .iter()
        .map(|&i| x.row(i).iter().zip(theta).map(|(&v, &w)| v as f64 * w).sum())
        .collect();
    p.sort_by(|a, b| a.total_cmp(b));
    p
}

/// Mean over `projections` random unit directions of the 1-D W2 between
/// the projected sets. The larger set is subsampled to the smaller size.
pub fn sliced_wasserstein(a: &TensorBatch, b: &TensorBatch, projections: usize, stream: &mut RngStream) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(LbmError::Empty("sliced wasserstein on an empty set".into()));
    }
    if a.row_len() != b.row_len() {
        return Err(LbmError::Shape(format!(
            "sliced wasserstein needs equal feature dims, got {} and {}",
            a.row_len(),
            b.row_len()
        )));
    }
    if projections == 0 {
        return Err(LbmError::Metric("projections must be >= 1".into()));
    }
    let m = a.batch().min(b.batch());
    let ia = subsample(a.batch(), m, &mut stream.fork());
    let ib = subsample(b.batch(), m, &mut stream.fork());
    let d = a.row_len();
    let base = stream.fork();
    let per = par::map_range(projections, |k| {
        let mut s = base.split(k as u64);
        let mut theta: Vec<f64> = if d == 1 { vec![1.0] } else { (0..d).map(|_| s.normal()).collect() };
        let norm = theta.iter().map(|v| v * v).sum::<f64>().sqrt();
        theta.iter_mut().for_each(|v| *v /= norm);
        let pa = sorted_projection(a, &ia, &theta);
        let pb = sorted_projection(b, &ib, &theta);
        let w2 = pa.iter().zip(&pb).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / m as f64;
        w2.sqrt()
    });
    Ok(per.iter().sum::<f64>() / projections as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairedMetrics {
    pub mse: f64,
    /// `+inf` when `mse == 0`.
    pub psnr: f64,
}

pub fn paired_metrics(pred: &TensorBatch, target: &TensorBatch) -> Result<PairedMetrics> {
    pred.same_shape(target, "paired metrics")?;
    if pred.is_empty() {
        return Err(LbmError::Empty("paired metrics".into()));
    }
    let mse = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(&p, &q)| {
            let d = p as f64 - q as f64;
            d * d
        })
        .sum::<f64>()
        / pred.len() as f64;
    let psnr = if mse == 0.0 { f64::INFINITY } else { 10.0 * (1.0 / mse).log10() };
    Ok(PairedMetrics { mse, psnr })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Coverage {
    pub fractions: Vec<f64>,
    pub covered: bool,
}

/// Minimum per-mode fraction for a mode to count as reached.
pub const COVERAGE_FLOOR: f64 = 0.1;

/// Fraction of outputs within `radius` of each center.
pub fn conditional_coverage(outputs: &TensorBatch, centers: &[Vec<f64>], radius: f64) -> Result<Coverage> {
    if radius.is_nan() || radius <= 0.0 {
        return Err(LbmError::Metric(format!("coverage radius must be > 0, got {radius}")));
    }
    if outputs.is_empty() {
        return Err(LbmError::Empty("coverage on an empty output set".into()));
    }
    if centers.is_empty() || centers.iter().any(|c| c.len() != outputs.row_len()) {
        return Err(LbmError::Shape("mode centers must match the output dim".into()));
    }
    let n = outputs.batch() as f64;
    let fractions: Vec<f64> = centers
        .iter()
        .map(|c| {
            let hits = outputs
                .rows()
                .filter(|r| {
                    let d2: f64 = r.iter().zip(c).map(|(&x, &y)| (x as f64 - y).powi(2)).sum();
                    d2.sqrt() <= radius
                })
                .count();
            hits as f64 / n
        })
        .collect();
    let covered = fractions.iter().all(|&f| f >= COVERAGE_FLOOR);
    Ok(Coverage { fractions, covered })
}
