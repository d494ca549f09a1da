//! Run configuration: flat `key=value` files, presets and overrides.
//!
//! Resolution order is defaults, then the preset (from the command line if
//! given there, else from the file), then file values, then command-line
//! values.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use crate::bridge::SigmaParam;
use crate::codec::Codec;
use crate::data::PairedTask;
use crate::error::{LbmError, Result};
use crate::oracle::GaussianTaskSpec;
use crate::schedule::TimestepDistribution;
use crate::train::{PixelLossKind, TrainConfig};

pub const PRESETS: [&str; 4] = ["object-removal-analog", "depth-analog", "normal-analog", "relight-analog"];

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub task: PairedTask,
    pub codec: Codec,
    pub hidden: Vec<usize>,
    pub train: TrainConfig,
    pub steps: usize,
    pub sample_seed: u64,
    pub n_eval: usize,
    pub out_dir: PathBuf,
    pub preset: Option<String>,
    pub sweep: Option<String>,
    pub checkpoint: Option<PathBuf>,
    pub spec: GaussianTaskSpec,
    pub oracle_n: usize,
    pub bins: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            task: PairedTask::Rings2d,
            codec: Codec::Identity,
            hidden: vec![64, 64],
            train: TrainConfig::default(),
            steps: 4,
            sample_seed: 1,
            n_eval: 1000,
            out_dir: PathBuf::from("runs/default"),
            preset: None,
            sweep: None,
            checkpoint: None,
            spec: GaussianTaskSpec::new(0.0, 1.0, 2.0, 1.0, 0.1).unwrap(),
            oracle_n: 1_000_000,
            bins: 17,
        }
    }
}

fn parse<T: FromStr>(field: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse::<T>()
        .map_err(|_| LbmError::config(field, format!("cannot parse {value:?}")))
}

fn with_line(e: LbmError, line: usize) -> LbmError {
    match e {
        LbmError::Config { field, message, .. } => LbmError::Config {
            line: Some(line),
            field,
            message,
        },
        other => other,
    }
}

/// Split a config file into `(line number, key, value)` entries.
pub fn parse_lines(text: &str) -> Result<Vec<(usize, String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| LbmError::Config {
            line: Some(i + 1),
            field: line.to_string(),
            message: "expected key=value".into(),
        })?;
        out.push((i + 1, k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

/// Parse `--key=value` arguments.
pub fn parse_overrides(args: &[String]) -> Result<Vec<(String, String)>> {
    args.iter()
        .map(|a| {
            let body = a
                .strip_prefix("--")
                .ok_or_else(|| LbmError::config(a.as_str(), "overrides must look like --key=value"))?;
            let (k, v) = body
                .split_once('=')
                .ok_or_else(|| LbmError::config(body, "overrides must look like --key=value"))?;
            Ok((k.trim().to_string(), v.trim().to_string()))
        })
        .collect()
}

impl RunConfig {
    /// Resolve from optional file text and command-line overrides.
    pub fn resolve(file: Option<&str>, overrides: &[(String, String)]) -> Result<Self> {
        let lines = match file {
            Some(text) => parse_lines(text)?,
            None => Vec::new(),
        };
        let mut cfg = RunConfig::default();
        let cli_preset = overrides.iter().rev().find(|(k, _)| k == "preset");
        let file_preset = lines.iter().rev().find(|(_, k, _)| k == "preset");
        match (cli_preset, file_preset) {
            (Some((_, p)), _) => cfg.apply_preset(p)?,
            (None, Some((line, _, p))) => cfg.apply_preset(p).map_err(|e| with_line(e, *line))?,
            (None, None) => {}
        }
        for (line, k, v) in &lines {
            if k != "preset" {
                cfg.set(k, v).map_err(|e| with_line(e, *line))?;
            }
        }
        for (k, v) in overrides {
            if k != "preset" {
                cfg.set(k, v)?;
            }
        }
        cfg.train.validate()?;
        Ok(cfg)
    }

    pub fn apply_preset(&mut self, name: &str) -> Result<()> {
        let t = &mut self.train;
        t.pixel_loss = PixelLossKind::L2;
        match name {
            "object-removal-analog" => {
                t.sigma = SigmaParam::new(0.05)?;
                t.lambda = 10.0;
                t.timestep_dist = TimestepDistribution::discrete(4)?;
            }
            "depth-analog" => {
                t.sigma = SigmaParam::new(0.005)?;
                t.lambda = 50.0;
                t.timestep_dist = TimestepDistribution::weighted(vec![(0.0, 0.9), (0.25, 0.025), (0.5, 0.05), (0.75, 0.025)])?;
            }
            "normal-analog" => {
                t.sigma = SigmaParam::new(0.1)?;
                t.lambda = 50.0;
                t.pixel_loss = PixelLossKind::L1;
                t.timestep_dist = TimestepDistribution::weighted(vec![(0.0, 0.8), (0.25, 0.05), (0.5, 0.1), (0.75, 0.05)])?;
            }
            "relight-analog" => {
                t.sigma = SigmaParam::new(0.01)?;
                t.lambda = 10.0;
                t.timestep_dist = TimestepDistribution::discrete(4)?;
            }
            other => {
                return Err(LbmError::config(
                    "preset",
                    format!("unknown preset {other:?}; available: {}", PRESETS.join(", ")),
                ))
            }
        }
        self.preset = Some(name.to_string());
        Ok(())
    }

    /// Set one key. Unknown keys are an error.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let t = &mut self.train;
        match key {
            "task" => self.task = value.parse()?,
            "codec" => self.codec = value.parse()?,
            "hidden" => {
                self.hidden = if value.trim().is_empty() {
                    Vec::new()
                } else {
                    value.split(',').map(|w| parse("hidden", w)).collect::<Result<_>>()?
                };
                if self.hidden.contains(&0) {
                    return Err(LbmError::config("hidden", "widths must be >= 1"));
                }
            }
            "sigma" => {
                t.sigma = SigmaParam::new(parse("sigma", value)?).map_err(|e| LbmError::config("sigma", e.to_string()))?
            }
            "lambda" => t.lambda = parse("lambda", value)?,
            "pixel_loss" => t.pixel_loss = value.parse()?,
            "crop_threshold" => t.crop.threshold = parse("crop_threshold", value)?,
            "crop_size" => t.crop.size = parse("crop_size", value)?,
            "timestep_dist" => {
                t.timestep_dist = value.parse().map_err(|e: LbmError| LbmError::config("timestep_dist", e.to_string()))?
            }
            "optimizer" => t.optimizer.kind = value.parse()?,
            "lr" => t.optimizer.lr = parse("lr", value)?,
            "beta1" => t.optimizer.beta1 = parse("beta1", value)?,
            "beta2" => t.optimizer.beta2 = parse("beta2", value)?,
            "eps" => t.optimizer.eps = parse("eps", value)?,
            "weight_decay" => t.optimizer.weight_decay = parse("weight_decay", value)?,
            "iterations" => t.iterations = parse("iterations", value)?,
            "batch_size" => t.batch_size = parse("batch_size", value)?,
            "seed" => t.seed = parse("seed", value)?,
            "steps" => {
                self.steps = parse("steps", value)?;
                if self.steps == 0 {
                    return Err(LbmError::config("steps", "must be >= 1"));
                }
            }
            "sample_seed" => self.sample_seed = parse("sample_seed", value)?,
            "n_eval" => {
                self.n_eval = parse("n_eval", value)?;
                if self.n_eval < 2 {
                    return Err(LbmError::config("n_eval", "must be >= 2"));
                }
            }
            "out_dir" => self.out_dir = PathBuf::from(value),
            "preset" => self.apply_preset(value)?,
            "sweep" => self.sweep = Some(value.to_string()),
            "checkpoint" => self.checkpoint = Some(PathBuf::from(value)),
            "spec" => self.spec = value.parse()?,
            "oracle_n" => self.oracle_n = parse("oracle_n", value)?,
            "bins" => self.bins = parse("bins", value)?,
            other => return Err(LbmError::config(other, "unknown key")),
        }
        Ok(())
    }

    /// Fully resolved configuration in the file format. Parsing the echo
    /// yields the same configuration.
    pub fn echo(&self) -> String {
        let t = &self.train;
        let mut s = String::new();
        if let Some(p) = &self.preset {
            let _ = writeln!(s, "# expanded from preset {p}");
        }
        let hidden: Vec<String> = self.hidden.iter().map(|w| w.to_string()).collect();
        let _ = writeln!(s, "task={}", self.task);
        let _ = writeln!(s, "codec={}", self.codec);
        let _ = writeln!(s, "hidden={}", hidden.join(","));
        let _ = writeln!(s, "sigma={}", t.sigma.get());
        let _ = writeln!(s, "lambda={}", t.lambda);
        let _ = writeln!(s, "pixel_loss={}", t.pixel_loss);
        let _ = writeln!(s, "crop_threshold={}", t.crop.threshold);
        let _ = writeln!(s, "crop_size={}", t.crop.size);
        let _ = writeln!(s, "timestep_dist={}", t.timestep_dist);
        let _ = writeln!(s, "optimizer={}", t.optimizer.kind);
        let _ = writeln!(s, "lr={}", t.optimizer.lr);
        let _ = writeln!(s, "beta1={}", t.optimizer.beta1);
        let _ = writeln!(s, "beta2={}", t.optimizer.beta2);
        let _ = writeln!(s, "eps={}", t.optimizer.eps);
        let _ = writeln!(s, "weight_decay={}", t.optimizer.weight_decay);
        let _ = writeln!(s, "iterations={}", t.iterations);
        let _ = writeln!(s, "batch_size={}", t.batch_size);
        let _ = writeln!(s, "seed={}", t.seed);
        let _ = writeln!(s, "steps={}", self.steps);
        let _ = writeln!(s, "sample_seed={}", self.sample_seed);
        let _ = writeln!(s, "n_eval={}", self.n_eval);
        let _ = writeln!(s, "out_dir={}", self.out_dir.display());
        if let Some(sw) = &self.sweep {
            let _ = writeln!(s, "sweep={sw}");
        }
        if let Some(c) = &self.checkpoint {
            let _ = writeln!(s, "checkpoint={}", c.display());
        }
        let _ = writeln!(s, "spec={}", self.spec);
        let _ = writeln!(s, "oracle_n={}", self.oracle_n);
        let _ = writeln!(s, "bins={}", self.bins);
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ov(pairs: &[(&str, &str)]) -> Vec<(String, String)> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn presets_resolve() {
        let c = RunConfig::resolve(None, &ov(&[("preset", "object-removal-analog")])).unwrap();
        assert_eq!(c.train.sigma.get(), 0.05);
        assert_eq!(c.train.lambda, 10.0);
        assert_eq!(c.train.timestep_dist, TimestepDistribution::DiscreteUniform(4));

        let n = RunConfig::resolve(Some("preset=normal-analog\n"), &[]).unwrap();
        assert_eq!(n.train.sigma.get(), 0.1);
        assert_eq!(n.train.lambda, 50.0);
        assert_eq!(n.train.pixel_loss, PixelLossKind::L1);
        assert_eq!(n.train.timestep_dist.support().unwrap(), vec![0.0, 0.25, 0.5, 0.75]);
        assert_eq!(n.train.timestep_dist.weights().unwrap(), vec![0.8, 0.05, 0.1, 0.05]);

        let d = RunConfig::resolve(None, &ov(&[("preset", "depth-analog")])).unwrap();
        assert_eq!(d.train.sigma.get(), 0.005);
        assert_eq!(d.train.timestep_dist.weights().unwrap()[0], 0.9);
        let r = RunConfig::resolve(None, &ov(&[("preset", "relight-analog")])).unwrap();
        assert_eq!((r.train.sigma.get(), r.train.lambda), (0.01, 10.0));
    }

    #[test]
    fn unknown_preset_lists_available() {
        let e = RunConfig::resolve(None, &ov(&[("preset", "nope")])).unwrap_err().to_string();
        for p in PRESETS {
            assert!(e.contains(p), "{e}");
        }
    }

    #[test]
    fn precedence() {
        let file = "preset=object-removal-analog\nsigma=0.2 # file wins over preset\nlambda=3\n";
        let c = RunConfig::resolve(Some(file), &ov(&[("lambda", "7")])).unwrap();
        assert_eq!(c.train.sigma.get(), 0.2);
        assert_eq!(c.train.lambda, 7.0);
        assert_eq!(c.train.timestep_dist, TimestepDistribution::DiscreteUniform(4));
        // command-line preset replaces the file's, file values still apply
        let c = RunConfig::resolve(Some(file), &ov(&[("preset", "depth-analog")])).unwrap();
        assert_eq!(c.train.sigma.get(), 0.2);
        assert_eq!(c.train.lambda, 3.0);
        assert_eq!(c.train.timestep_dist.weights().unwrap()[0], 0.9);
    }

    #[test]
    fn errors_carry_line_and_field() {
        let e = RunConfig::resolve(Some("# c\nsigma=0.1\nbatch_size=abc\n"), &[]).unwrap_err();
        match e {
            LbmError::Config { line, field, .. } => {
                assert_eq!(line, Some(3));
                assert_eq!(field, "batch_size");
            }
            other => panic!("{other:?}"),
        }
        assert!(RunConfig::resolve(Some("just words\n"), &[]).is_err());
        assert!(RunConfig::resolve(None, &ov(&[("bogus", "1")])).is_err());
        assert!(RunConfig::resolve(None, &ov(&[("sigma", "-1")])).is_err());
        assert!(matches!(
            RunConfig::resolve(None, &ov(&[("crop_size", "9")])),
            Err(LbmError::Config { .. })
        ));
        assert!(parse_overrides(&["sigma=1".into()]).is_err());
    }

    #[test]
    fn echo_round_trips() {
        let c = RunConfig::resolve(
            Some("preset=normal-analog\ntask=shadow12\ncodec=pool:2\nhidden=32,16\nlr=0.0003\n"),
            &ov(&[("sweep", "sigma=0;0.1"), ("checkpoint", "x/params.lbmt")]),
        )
        .unwrap();
        let again = RunConfig::resolve(Some(&c.echo()), &[]).unwrap();
        assert_eq!(RunConfig { preset: None, ..c }, again);
    }
}
