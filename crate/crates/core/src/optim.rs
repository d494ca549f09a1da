use std::fmt;
use std::str::FromStr;

use crate::error::{LbmError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizerKind {
    Sgd,
    AdamW,
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OptimizerKind::Sgd => "sgd",
            OptimizerKind::AdamW => "adamw",
        })
    }
}

impl FromStr for OptimizerKind {
    type Err = LbmError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "sgd" => Ok(OptimizerKind::Sgd),
            "adamw" => Ok(OptimizerKind::AdamW),
            other => Err(LbmError::config("optimizer", format!("unknown optimizer {other:?} (sgd | adamw)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            kind: OptimizerKind::AdamW,
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

/// Optimizer with its moment buffers.
///
/// AdamW uses decoupled weight decay: parameters are first shrunk by
/// `lr * weight_decay`, then moved by the bias-corrected Adam step.
#[derive(Debug, Clone)]
pub struct Optimizer {
    cfg: OptimizerConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
}

impl Optimizer {
    pub fn new(cfg: OptimizerConfig, num_params: usize) -> Self {
        let moments = if cfg.kind == OptimizerKind::AdamW { num_params } else { 0 };
        Self {
            cfg,
            m: vec![0.0; moments],
            v: vec![0.0; moments],
            step: 0,
        }
    }

    pub fn config(&self) -> &OptimizerConfig {
        &self.cfg
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, params: &mut [f32], grad: &[f64]) -> Result<()> {
        if params.len() != grad.len() {
            return Err(LbmError::Shape(format!(
                "{} params vs {} gradient entries",
                params.len(),
                grad.len()
            )));
        }
        self.step += 1;
        let c = self.cfg;
        match c.kind {
            OptimizerKind::Sgd => {
                for (p, &g) in params.iter_mut().zip(grad) {
                    let pv = *p as f64;
                    *p = (pv - c.lr * (g + c.weight_decay * pv)) as f32;
                }
            }
            OptimizerKind::AdamW => {
                let bc1 = 1.0 - c.beta1.powi(self.step as i32);
                let bc2 = 1.0 - c.beta2.powi(self.step as i32);
                for (((p, &g), m), v) in params.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
                    *m = c.beta1 * *m + (1.0 - c.beta1) * g;
                    *v = c.beta2 * *v + (1.0 - c.beta2) * g * g;
                    let m_hat = *m / bc1;
                    let v_hat = *v / bc2;
                    let mut pv = *p as f64;
                    pv *= 1.0 - c.lr * c.weight_decay;
                    pv -= c.lr * m_hat / (v_hat.sqrt() + c.eps);
                    *p = pv as f32;
                }
            }
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(LbmError::NonFinite("optimizer step".into()));
        }
        Ok(())
    }
}
