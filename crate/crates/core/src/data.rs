//! Procedural paired tasks.
//!
//! Each sample `i` of a batch is generated from its own child stream, so
//! batches are reproducible and generation parallelizes without changing
//! the output.

use std::fmt;
use std::str::FromStr;

use crate::error::{LbmError, Result};
use crate::par;
use crate::rng::RngStream;
use crate::tensor::TensorBatch;

/// One batch of `(x0, x1)` couples and the optional condition.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedBatch {
    pub x0: TensorBatch,
    pub x1: TensorBatch,
    pub cond: Option<TensorBatch>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Coupling {
    Independent,
    Paired,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PairedTask {
    Gauss1d { mu0: f64, s0: f64, mu1: f64, s1: f64 },
    Rings2d,
    PointToBimodal,
    Inpaint { side: usize },
    Shadow { side: usize },
}

pub const RING_RADIUS: f64 = 2.0;
pub const RING_NOISE: f64 = 0.05;
pub const BIMODAL_CENTERS: [[f64; 2]; 2] = [[-2.0, 0.0], [2.0, 0.0]];
pub const BIMODAL_VAR: f64 = 0.1;

const GROUND: f32 = 0.5;
const OBJECT: f32 = 0.9;
const SHADOW: f32 = 0.15;
const LIGHT_STD: f64 = 1.5;

struct Row {
    x0: Vec<f32>,
    x1: Vec<f32>,
    cond: Option<Vec<f32>>,
}

pub fn gauss1d(mu0: f64, s0: f64, mu1: f64, s1: f64) -> Result<PairedTask> {
    if !(s0 > 0.0 && s1 > 0.0) {
        return Err(LbmError::config("task", format!("gauss1d scales must be positive, got {s0}, {s1}")));
    }
    Ok(PairedTask::Gauss1d { mu0, s0, mu1, s1 })
}

pub fn rings2d() -> PairedTask {
    PairedTask::Rings2d
}

pub fn point_to_bimodal() -> PairedTask {
    PairedTask::PointToBimodal
}

pub fn inpaint_toy(side: usize) -> Result<PairedTask> {
    if side < 8 || !side.is_multiple_of(4) {
        return Err(LbmError::config("task", format!("inpaint side must be >= 8 and divisible by 4, got {side}")));
    }
    Ok(PairedTask::Inpaint { side })
}

pub fn shadow_toy(side: usize) -> Result<PairedTask> {
    if side < 8 || !side.is_multiple_of(2) {
        return Err(LbmError::config("task", format!("shadow side must be an even number >= 8, got {side}")));
    }
    Ok(PairedTask::Shadow { side })
}

impl PairedTask {
    /// Per-sample shape of `x0` / `x1`.
    pub fn sample_shape(&self) -> Vec<usize> {
        match *self {
            PairedTask::Gauss1d { .. } => vec![1],
            PairedTask::Rings2d | PairedTask::PointToBimodal => vec![2],
            PairedTask::Inpaint { side } | PairedTask::Shadow { side } => vec![1, side, side],
        }
    }

    pub fn cond_shape(&self) -> Option<Vec<usize>> {
        match *self {
            PairedTask::Shadow { side } => Some(vec![1, side, side]),
            _ => None,
        }
    }

    pub fn coupling(&self) -> Coupling {
        match self {
            PairedTask::Inpaint { .. } | PairedTask::Shadow { .. } => Coupling::Paired,
            _ => Coupling::Independent,
        }
    }

    pub fn rank(&self) -> usize {
        self.sample_shape().len() + 1
    }

    pub fn sample(&self, n: usize, stream: &mut RngStream) -> Result<PairedBatch> {
        if n == 0 {
            return Err(LbmError::Empty("task sample with n = 0".into()));
        }
        let base = stream.fork();
        let rows = par::map_range(n, |i| self.sample_row(&mut base.split(i as u64)));
        let mut shape = vec![n];
        shape.extend(self.sample_shape());
        let mut x0 = Vec::with_capacity(n * rows[0].x0.len());
        let mut x1 = Vec::with_capacity(n * rows[0].x1.len());
        let mut cond = self.cond_shape().map(|_| Vec::new());
        for r in rows {
            x0.extend(r.x0);
            x1.extend(r.x1);
            if let (Some(c), Some(rc)) = (cond.as_mut(), r.cond) {
                c.extend(rc);
            }
        }
        let cond = match (cond, self.cond_shape()) {
            (Some(c), Some(cs)) => {
                let mut s = vec![n];
                s.extend(cs);
                Some(TensorBatch::new(s, c)?)
            }
            _ => None,
        };
        Ok(PairedBatch {
            x0: TensorBatch::new(shape.clone(), x0)?,
            x1: TensorBatch::new(shape, x1)?,
            cond,
        })
    }

    fn sample_row(&self, s: &mut RngStream) -> Row {
        match *self {
            PairedTask::Gauss1d { mu0, s0, mu1, s1 } => {
                let a = mu0 + s0 * s.normal();
                let b = mu1 + s1 * s.normal();
                Row {
                    x0: vec![a as f32],
                    x1: vec![b as f32],
                    cond: None,
                }
            }
            PairedTask::Rings2d => {
                let x0 = vec![s.normal() as f32, s.normal() as f32];
                let theta = std::f64::consts::TAU * s.uniform();
                let r = RING_RADIUS + RING_NOISE * s.normal();
                Row {
                    x0,
                    x1: vec![(r * theta.cos()) as f32, (r * theta.sin()) as f32],
                    cond: None,
                }
            }
            PairedTask::PointToBimodal => {
                let c = BIMODAL_CENTERS[s.below(2) as usize];
                let sd = BIMODAL_VAR.sqrt();
                Row {
                    x0: vec![0.0, 0.0],
                    x1: vec![(c[0] + sd * s.normal()) as f32, (c[1] + sd * s.normal()) as f32],
                    cond: None,
                }
            }
            PairedTask::Inpaint { side } => {
                let smp = inpaint_sample(side, s);
                Row {
                    x0: smp.x0,
                    x1: smp.x1,
                    cond: None,
                }
            }
            PairedTask::Shadow { side } => {
                let p = ShadowParams::draw(side, s);
                let smp = render_shadow(side, &p);
                Row {
                    x0: smp.x0,
                    x1: smp.x1,
                    cond: Some(smp.light),
                }
            }
        }
    }
}

impl fmt::Display for PairedTask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PairedTask::Gauss1d { mu0, s0, mu1, s1 } => write!(f, "gauss1d:{mu0},{s0},{mu1},{s1}"),
            PairedTask::Rings2d => write!(f, "rings2d"),
            PairedTask::PointToBimodal => write!(f, "point_to_bimodal"),
            PairedTask::Inpaint { side } => write!(f, "inpaint{side}"),
            PairedTask::Shadow { side } => write!(f, "shadow{side}"),
        }
    }
}

impl FromStr for PairedTask {
    type Err = LbmError;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = |msg: String| LbmError::config("task", msg);
        if let Some(args) = s.strip_prefix("gauss1d:") {
            let v: Vec<f64> = args
                .split(',')
                .map(|a| a.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| bad(format!("bad gauss1d parameters in {s:?}")))?;
            if v.len() != 4 {
                return Err(bad(format!("gauss1d needs mu0,s0,mu1,s1, got {s:?}")));
            }
            return gauss1d(v[0], v[1], v[2], v[3]);
        }
        match s {
            "rings2d" => return Ok(rings2d()),
            "point_to_bimodal" => return Ok(point_to_bimodal()),
            _ => {}
        }
        let side = |rest: &str| rest.parse::<usize>().map_err(|_| bad(format!("bad image side in {s:?}")));
        if let Some(rest) = s.strip_prefix("inpaint") {
            return inpaint_toy(side(rest)?);
        }
        if let Some(rest) = s.strip_prefix("shadow") {
            return shadow_toy(side(rest)?);
        }
        Err(bad(format!(
            "unknown task {s:?} (gauss1d:mu0,s0,mu1,s1 | rings2d | point_to_bimodal | inpaint16 | shadow12)"
        )))
    }
}

/// One inpainting couple plus the location of its masked square.
#[derive(Debug, Clone, PartialEq)]
pub struct InpaintSample {
    pub x0: Vec<f32>,
    pub x1: Vec<f32>,
    /// `(row, col, size)` of the masked square.
    pub mask: (usize, usize, usize),
}

/// Smooth background from three low-frequency cosines, min-max scaled to
/// `[0, 1]`; the source has a square of half the side length replaced by
/// uniform noise.
pub fn inpaint_sample(side: usize, s: &mut RngStream) -> InpaintSample {
    let mut waves = [(0.0f64, 0.0f64, 0.0f64, 0.0f64); 3];
    for w in &mut waves {
        let idx = 1 + s.below(8);
        let (fx, fy) = ((idx / 3) as f64, (idx % 3) as f64);
        let phase = std::f64::consts::TAU * s.uniform();
        let amp = 0.5 + 0.5 * s.uniform();
        *w = (fx, fy, phase, amp);
    }
    let mut img = vec![0.0f64; side * side];
    for y in 0..side {
        for x in 0..side {
            img[y * side + x] = waves
                .iter()
                .map(|&(fx, fy, ph, a)| {
                    a * (std::f64::consts::TAU * (fx * x as f64 + fy * y as f64) / side as f64 + ph).cos()
                })
                .sum();
        }
    }
    let lo = img.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = img.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let x1: Vec<f32> = if hi - lo > 1e-9 {
        img.iter().map(|&v| (((v - lo) / (hi - lo)) as f32).clamp(0.0, 1.0)).collect()
    } else {
        vec![0.5; side * side]
    };
    let m = side / 2;
    let r0 = s.below((side - m + 1) as u64) as usize;
    let c0 = s.below((side - m + 1) as u64) as usize;
    let mut x0 = x1.clone();
    for y in r0..r0 + m {
        for x in c0..c0 + m {
            x0[y * side + x] = s.uniform() as f32;
        }
    }
    InpaintSample {
        x0,
        x1,
        mask: (r0, c0, m),
    }
}

/// Latent variables of one shadow couple.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ShadowParams {
    pub light_left: bool,
    /// Light blob row.
    pub row: usize,
    /// Distance of the light blob from its image edge.
    pub inset: usize,
    /// Width of the shadow bar.
    pub bar: usize,
}

impl ShadowParams {
    pub fn draw(side: usize, s: &mut RngStream) -> Self {
        let half = side / 2;
        let light_left = s.below(2) == 0;
        let row = 2 + s.below((side - 4) as u64) as usize;
        let inset_max = half.saturating_sub(3).max(1);
        let inset = 1 + s.below(inset_max as u64) as usize;
        let bar_max = 3.min(half - 2);
        let bar = 2 + s.below((bar_max - 1) as u64) as usize;
        Self {
            light_left,
            row,
            inset,
            bar,
        }
    }

    pub fn mirrored(self) -> Self {
        Self {
            light_left: !self.light_left,
            ..self
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShadowSample {
    pub x0: Vec<f32>,
    pub light: Vec<f32>,
    pub x1: Vec<f32>,
}

/// Gray ground with a bright centered 4x4 square (`x0`), a Gaussian light
/// blob on one side (`light`), and `x0` plus a dark bar on the opposite
/// side of the square (`x1`).
pub fn render_shadow(side: usize, p: &ShadowParams) -> ShadowSample {
    let half = side / 2;
    let (lo, hi) = (half - 2, half + 2);
    let mut x0 = vec![GROUND; side * side];
    for y in lo..hi {
        for x in lo..hi {
            x0[y * side + x] = OBJECT;
        }
    }
    let cx = if p.light_left { p.inset } else { side - 1 - p.inset };
    let light = (0..side * side)
        .map(|k| {
            let (y, x) = ((k / side) as f64, (k % side) as f64);
            let d2 = (y - p.row as f64).powi(2) + (x - cx as f64).powi(2);
            (-d2 / (2.0 * LIGHT_STD * LIGHT_STD)).exp() as f32
        })
        .collect();
    let cols = if p.light_left { hi..hi + p.bar } else { lo - p.bar..lo };
    let mut x1 = x0.clone();
    for y in lo..hi {
        for x in cols.clone() {
            x1[y * side + x] = SHADOW;
        }
    }
    ShadowSample { x0, light, x1 }
}

/// Which half of a `side x side` image is darker on average; `true` for
/// the right half.
pub fn darker_half_is_right(side: usize, img: &[f32]) -> bool {
    let half = side / 2;
    let (mut left, mut right) = (0.0f64, 0.0f64);
    for y in 0..side {
        for x in 0..side {
            let v = img[y * side + x] as f64;
            if x < half {
                left += v;
            } else {
                right += v;
            }
        }
    }
    right < left
}
