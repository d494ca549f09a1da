//! Subcommand implementations and their on-disk artifacts.

use std::fs;
use std::path::{Path, PathBuf};

use crate::config::RunConfig;
use crate::data::{darker_half_is_right, PairedBatch, PairedTask, BIMODAL_CENTERS};
use crate::error::{LbmError, Result};
use crate::eval::{
    conditional_coverage, energy_distance, metrics_csv, paired_metrics, sliced_wasserstein, MetricReport,
};
use crate::model::DriftModel;
use crate::oracle::{gaussian_drift, mc_binned_drift, GaussianTaskSpec};
use crate::rng::RngStream;
use crate::sample::{translate, CountingDrift};
use crate::schedule::inference_grid;
use crate::tensor::{read_tensor, write_pgm, write_tensor, TensorBatch};
use crate::train::{init_stream, model_layout, train_run, TrainReport};

pub const CHECKPOINT_FILE: &str = "params.lbmt";
const SLICED_PROJECTIONS: usize = 64;
const COVERAGE_RADIUS: f64 = 1.0;
const MAX_PGM: usize = 8;

/// Build the model for `cfg` and train it in memory.
pub fn train_model(cfg: &RunConfig) -> Result<TrainReport> {
    let (widths, cond_dim) = model_layout(&cfg.task, &cfg.codec, &cfg.hidden)?;
    let model = DriftModel::init(widths, cond_dim, &mut init_stream(cfg.train.seed))?;
    train_run(&cfg.train, &cfg.task, &cfg.codec, model)
}

fn meta_path(params: &Path) -> PathBuf {
    params.with_extension("meta")
}

/// Parameters as a `[1, P]` tensor plus a `.meta` sidecar with the layout.
pub fn save_checkpoint(path: &Path, model: &DriftModel) -> Result<()> {
    let params = TensorBatch::new(vec![1, model.num_params()], model.params().to_vec())?;
    write_tensor(path, &params)?;
    let widths: Vec<String> = model.widths().iter().map(|w| w.to_string()).collect();
    fs::write(
        meta_path(path),
        format!("widths={}\ncond_dim={}\n", widths.join(","), model.cond_dim()),
    )?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<DriftModel> {
    let params = read_tensor(path)?;
    let meta = fs::read_to_string(meta_path(path))?;
    let mut widths = None;
    let mut cond_dim = None;
    for line in meta.lines() {
        match line.split_once('=') {
            Some(("widths", v)) => {
                widths = Some(
                    v.split(',')
                        .map(|w| w.trim().parse::<usize>())
                        .collect::<std::result::Result<Vec<_>, _>>()
                        .map_err(|_| LbmError::Format(format!("bad widths {v:?}")))?,
                )
            }
            Some(("cond_dim", v)) => {
                cond_dim = Some(v.trim().parse().map_err(|_| LbmError::Format(format!("bad cond_dim {v:?}")))?)
            }
            _ => {}
        }
    }
    let (widths, cond_dim) = widths
        .zip(cond_dim)
        .ok_or_else(|| LbmError::Format("checkpoint metadata lacks widths or cond_dim".into()))?;
    DriftModel::from_params(widths, cond_dim, params.into_data())
}

/// Train and write `params.lbmt`, `loss.csv` and `config.resolved`.
pub fn run_train(cfg: &RunConfig) -> Result<TrainReport> {
    fs::create_dir_all(&cfg.out_dir)?;
    fs::write(cfg.out_dir.join("config.resolved"), cfg.echo())?;
    let report = train_model(cfg)?;
    save_checkpoint(&cfg.out_dir.join(CHECKPOINT_FILE), &report.model)?;
    report.write_loss_csv(cfg.out_dir.join("loss.csv"))?;
    Ok(report)
}

/// Held-out pairs, derived from the master seed so that they do not change
/// with the sampling seed.
pub fn eval_batch(cfg: &RunConfig) -> Result<PairedBatch> {
    let mut s = RngStream::new(cfg.train.seed).split(0).split(1);
    cfg.task.sample(cfg.n_eval, &mut s)
}

#[derive(Debug, Clone)]
pub struct SampleOutcome {
    pub inputs: PairedBatch,
    pub outputs: TensorBatch,
    pub metrics: Vec<MetricReport>,
}

impl SampleOutcome {
    pub fn metric(&self, name: &str) -> Option<f64> {
        self.metrics.iter().find(|m| m.name == name).map(|m| m.value)
    }
}

fn check_layout(cfg: &RunConfig, model: &DriftModel) -> Result<()> {
    let (widths, cond_dim) = model_layout(&cfg.task, &cfg.codec, &cfg.hidden)?;
    if widths != model.widths() || cond_dim != model.cond_dim() {
        return Err(LbmError::Model(format!(
            "checkpoint widths {:?} (cond {}) do not match the config's {:?} (cond {})",
            model.widths(),
            model.cond_dim(),
            widths,
            cond_dim
        )));
    }
    Ok(())
}

/// Translate the held-out batch with `model` and score the result.
pub fn evaluate(cfg: &RunConfig, model: &DriftModel) -> Result<SampleOutcome> {
    check_layout(cfg, model)?;
    let grid = inference_grid(&cfg.train.timestep_dist, cfg.steps)?;
    let inputs = eval_batch(cfg)?;
    let counter = CountingDrift::new(model);
    let outputs = translate(
        &counter,
        &cfg.codec,
        &inputs.x0,
        &grid,
        cfg.train.sigma,
        &RngStream::new(cfg.sample_seed),
        inputs.cond.as_ref(),
    )?;
    let mut metrics = vec![
        MetricReport::new("nfe", counter.calls() as f64),
        MetricReport::new("steps", cfg.steps as f64),
    ];
    metrics.extend(score(cfg, &inputs, &outputs)?);
    Ok(SampleOutcome {
        inputs,
        outputs,
        metrics,
    })
}

fn score(cfg: &RunConfig, inputs: &PairedBatch, outputs: &TensorBatch) -> Result<Vec<MetricReport>> {
    let mut m = Vec::new();
    let n = outputs.batch() as f64;
    match cfg.task {
        PairedTask::Gauss1d { .. } | PairedTask::Rings2d | PairedTask::PointToBimodal => {
            let ed = energy_distance(outputs, &inputs.x1)?;
            let ed0 = energy_distance(&inputs.x0, &inputs.x1)?;
            m.push(MetricReport::new("energy_distance", ed));
            m.push(MetricReport::new("energy_distance_source", ed0));
            m.push(MetricReport::new("energy_ratio", if ed0 > 0.0 { ed / ed0 } else { f64::NAN }));
            let mut s = RngStream::new(cfg.sample_seed).split(u64::MAX);
            m.push(MetricReport::new(
                "sliced_wasserstein",
                sliced_wasserstein(outputs, &inputs.x1, SLICED_PROJECTIONS, &mut s)?,
            ));
            if cfg.task == PairedTask::PointToBimodal {
                let centers: Vec<Vec<f64>> = BIMODAL_CENTERS.iter().map(|c| c.to_vec()).collect();
                let cov = conditional_coverage(outputs, &centers, COVERAGE_RADIUS)?;
                for (i, f) in cov.fractions.iter().enumerate() {
                    m.push(MetricReport::new(format!("coverage_mode{i}"), *f).with_stderr((f * (1.0 - f) / n).sqrt()));
                }
                m.push(MetricReport::new("covered", if cov.covered { 1.0 } else { 0.0 }));
            }
        }
        PairedTask::Inpaint { .. } | PairedTask::Shadow { .. } => {
            let pm = paired_metrics(outputs, &inputs.x1)?;
            m.push(MetricReport::new("mse", pm.mse));
            m.push(MetricReport::new("psnr", pm.psnr));
            if let PairedTask::Shadow { side } = cfg.task {
                let hits = outputs
                    .rows()
                    .zip(inputs.x1.rows())
                    .filter(|(o, t)| darker_half_is_right(side, o) == darker_half_is_right(side, t))
                    .count() as f64;
                let f = hits / n;
                m.push(MetricReport::new("correct_side", f).with_stderr((f * (1.0 - f) / n).sqrt()));
            }
        }
    }
    Ok(m)
}

fn checkpoint_path(cfg: &RunConfig) -> PathBuf {
    cfg.checkpoint.clone().unwrap_or_else(|| cfg.out_dir.join(CHECKPOINT_FILE))
}

/// Load the checkpoint, translate, write `outputs.lbmt`, `metrics.csv`,
/// plus `outputs.csv` for point tasks or a few PGMs for image tasks.
pub fn run_sample(cfg: &RunConfig) -> Result<SampleOutcome> {
    let model = load_checkpoint(&checkpoint_path(cfg))?;
    let outcome = evaluate(cfg, &model)?;
    fs::create_dir_all(&cfg.out_dir)?;
    write_tensor(cfg.out_dir.join("outputs.lbmt"), &outcome.outputs)?;
    fs::write(cfg.out_dir.join("metrics.csv"), metrics_csv(&outcome.metrics))?;
    let out = &outcome.outputs;
    if out.rank() == 2 {
        let d = out.row_len();
        let header: Vec<String> = (0..d).map(|j| format!("x{j}")).collect();
        let mut s = header.join(",") + "\n";
        for r in out.rows() {
            let vals: Vec<String> = r.iter().map(|v| v.to_string()).collect();
            s.push_str(&vals.join(","));
            s.push('\n');
        }
        fs::write(cfg.out_dir.join("outputs.csv"), s)?;
    } else {
        let (h, w) = (out.shape()[2], out.shape()[3]);
        for i in 0..out.batch().min(MAX_PGM) {
            write_pgm(cfg.out_dir.join(format!("sample_{i}.pgm")), w, h, &out.row(i)[..h * w])?;
        }
    }
    Ok(outcome)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub value: String,
    /// `None` on success, else the error message.
    pub error: Option<String>,
    pub metrics: Vec<MetricReport>,
}

/// `key=v1,v2,...`; values are separated by `;` instead when any value
/// itself contains a comma (timestep distributions).
pub fn parse_sweep(spec: &str) -> Result<(String, Vec<String>)> {
    let (key, values) = spec
        .split_once('=')
        .ok_or_else(|| LbmError::config("sweep", format!("expected key=values, got {spec:?}")))?;
    let key = match key.trim() {
        "sigma" | "lambda" | "steps" => key.trim().to_string(),
        "timestep-dist" | "timestep_dist" => "timestep_dist".to_string(),
        other => {
            return Err(LbmError::config(
                "sweep",
                format!("cannot sweep {other:?}; use sigma, lambda, steps or timestep-dist"),
            ))
        }
    };
    let sep = if values.contains(';') || key == "timestep_dist" { ';' } else { ',' };
    let values: Vec<String> = values
        .split(sep)
        .map(|v| v.trim().to_string())
        .filter(|v| !v.is_empty())
        .collect();
    if values.is_empty() {
        return Err(LbmError::config("sweep", "no values"));
    }
    Ok((key, values))
}

/// Run one entry per sweep value with the same master seed. A `steps`
/// sweep trains once and samples per value.
pub fn sweep(cfg: &RunConfig) -> Result<(String, Vec<SweepRow>)> {
    let spec = cfg
        .sweep
        .as_deref()
        .ok_or_else(|| LbmError::config("sweep", "ablate needs sweep=key=values"))?;
    let (key, values) = parse_sweep(spec)?;
    for v in &values {
        cfg.clone().set(&key, v)?;
    }
    let shared = if key == "steps" { Some(train_model(cfg)?.model) } else { None };
    let mut rows = Vec::with_capacity(values.len());
    for v in values {
        let mut c = cfg.clone();
        c.set(&key, &v)?;
        let result = match &shared {
            Some(model) => evaluate(&c, model),
            None => train_model(&c).and_then(|r| {
                let mut out = evaluate(&c, &r.model)?;
                let last = r.total.last().copied().unwrap_or(f64::NAN);
                out.metrics.push(MetricReport::new("final_loss", last));
                Ok(out)
            }),
        };
        rows.push(match result {
            Ok(out) => SweepRow {
                value: v,
                error: None,
                metrics: out.metrics,
            },
            Err(e @ (LbmError::Io(_) | LbmError::Config { .. })) => return Err(e),
            Err(e) => SweepRow {
                value: v,
                error: Some(e.to_string()),
                metrics: Vec::new(),
            },
        });
    }
    Ok((key, rows))
}

fn csv_field(s: &str) -> String {
    if s.contains(',') || s.contains('"') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// One row per sweep value with a column per metric.
pub fn sweep_csv(key: &str, rows: &[SweepRow]) -> String {
    let mut names: Vec<&str> = Vec::new();
    for r in rows {
        for m in &r.metrics {
            if !names.contains(&m.name.as_str()) {
                names.push(&m.name);
            }
        }
    }
    let mut s = format!("{key},status");
    for n in &names {
        s.push(',');
        s.push_str(n);
    }
    s.push('\n');
    for r in rows {
        s.push_str(&csv_field(&r.value));
        s.push(',');
        s.push_str(&csv_field(r.error.as_deref().map_or("ok", |e| e)));
        for n in &names {
            s.push(',');
            if let Some(m) = r.metrics.iter().find(|m| m.name == *n) {
                s.push_str(&m.value.to_string());
            }
        }
        s.push('\n');
    }
    s
}

pub fn run_ablation(cfg: &RunConfig) -> Result<Vec<SweepRow>> {
    let (key, rows) = sweep(cfg)?;
    fs::create_dir_all(&cfg.out_dir)?;
    fs::write(cfg.out_dir.join("config.resolved"), cfg.echo())?;
    fs::write(cfg.out_dir.join("sweep.csv"), sweep_csv(&key, &rows))?;
    Ok(rows)
}

pub const ORACLE_TIMES: [f64; 4] = [0.0, 0.25, 0.5, 0.75];

#[derive(Debug, Clone, PartialEq)]
pub struct OracleRow {
    pub t: f64,
    pub z: f64,
    pub v_star: f64,
    pub v_mc: f64,
    pub stderr: f64,
    pub count: u64,
    pub v_model: Option<f64>,
}

impl OracleRow {
    pub fn deviation(&self) -> f64 {
        (self.v_star - self.v_mc).abs()
    }
}

/// Closed form against binned Monte Carlo on `t x bins`, plus the model's
/// drift when a checkpoint is given.
pub fn oracle_table(spec: &GaussianTaskSpec, n: usize, bins: usize, seed: u64, model: Option<&DriftModel>) -> Result<Vec<OracleRow>> {
    if let Some(m) = model {
        if m.latent_dim() != 1 || m.cond_dim() != 0 {
            return Err(LbmError::Model(format!(
                "oracle comparison needs a 1-D unconditional model, got widths {:?}",
                m.widths()
            )));
        }
    }
    let root = RngStream::new(seed);
    let mut rows = Vec::new();
    for (k, &t) in ORACLE_TIMES.iter().enumerate() {
        for b in mc_binned_drift(spec, t, n, bins, &root.split(k as u64))?.into_iter().flatten() {
            let v_model = match model {
                Some(m) => {
                    let z = TensorBatch::new(vec![1, 1], vec![b.z as f32])?;
                    Some(m.forward_f64(&z, &[t as f32], None)?[0])
                }
                None => None,
            };
            rows.push(OracleRow {
                t,
                z: b.z,
                v_star: gaussian_drift(spec, b.z, t)?,
                v_mc: b.drift,
                stderr: b.stderr,
                count: b.count,
                v_model,
            });
        }
    }
    Ok(rows)
}

pub fn oracle_csv(rows: &[OracleRow]) -> String {
    let with_model = rows.iter().any(|r| r.v_model.is_some());
    let mut s = String::from("t,z,v_star,v_mc,stderr,abs_dev,three_stderr,count");
    if with_model {
        s.push_str(",v_model");
    }
    s.push('\n');
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{}",
            r.t,
            r.z,
            r.v_star,
            r.v_mc,
            r.stderr,
            r.deviation(),
            3.0 * r.stderr,
            r.count
        ));
        if let Some(v) = r.v_model {
            s.push_str(&format!(",{v}"));
        }
        s.push('\n');
    }
    s
}

pub fn run_oracle_check(cfg: &RunConfig) -> Result<Vec<OracleRow>> {
    let model = cfg.checkpoint.as_deref().map(load_checkpoint).transpose()?;
    let rows = oracle_table(&cfg.spec, cfg.oracle_n, cfg.bins, cfg.train.seed, model.as_ref())?;
    fs::create_dir_all(&cfg.out_dir)?;
    fs::write(cfg.out_dir.join("oracle.csv"), oracle_csv(&rows))?;
    Ok(rows)
}
