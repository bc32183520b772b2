//! Run configuration: a line-oriented `key = value` format.
//!
//! `#` starts a comment, blank lines are ignored, keys may appear once, and
//! unknown keys are rejected. Lists are comma separated. Values are checked
//! as they are parsed so errors carry the line number.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use crate::conv::ConvSpec;
use crate::data::NormalizeMode;
use crate::error::{Error, Result};
use crate::nn::{Activation, InitScheme, Loss, TransformParams};
use crate::optim::{split_rule_name, StepParams, StepRegistry};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetKind {
    Idx,
    Cifar10,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub out: Option<PathBuf>,

    pub dataset: Option<DatasetKind>,
    pub images: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub cifar_dir: Option<PathBuf>,
    /// Use only the first `limit` samples (0 = all).
    pub limit: usize,
    pub normalize: NormalizeMode,

    pub arch: Vec<usize>,
    pub activation: Activation,
    pub loss: Loss,
    pub bias: bool,
    pub init: InitScheme,
    pub conv: Option<ConvSpec>,
    pub lr_multipliers: Option<Vec<f64>>,

    pub rule: String,
    pub mu: f64,
    /// Ridge term; each experiment supplies its own default.
    pub lambda: Option<f64>,
    pub momentum: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub report_every: usize,
    pub record_wall_time: bool,

    pub toy_x: [f64; 2],
    pub toy_t: [f64; 2],
    pub toy_w0: [f64; 2],
    pub toy_steps: usize,
    pub mu_sgd: Option<Vec<f64>>,
    pub mu_momentum: Option<Vec<f64>>,
    pub mu_csgd: Option<Vec<f64>>,
    pub grid_range: [f64; 2],
    pub grid_points: usize,
    pub paths_inputs: usize,
    pub paths_outputs: usize,
    pub paths_samples: usize,

    pub fd_step: f64,
    pub batch_file: Option<PathBuf>,
    pub epsilon: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let step = StepParams::default();
        RunConfig {
            seed: 0,
            out: None,
            dataset: None,
            images: None,
            labels: None,
            cifar_dir: None,
            limit: 0,
            normalize: NormalizeMode::UnitRange,
            arch: Vec::new(),
            activation: Activation::Relu,
            loss: Loss::CrossEntropy,
            bias: false,
            init: InitScheme::Kaiming,
            conv: None,
            lr_multipliers: None,
            rule: "sgd".into(),
            mu: step.mu,
            lambda: None,
            momentum: step.beta,
            adam_beta1: step.beta1,
            adam_beta2: step.beta2,
            adam_eps: step.eps,
            epochs: 10,
            batch_size: 32,
            report_every: 10,
            record_wall_time: true,
            toy_x: [1.0, 3.0],
            toy_t: [1.0, 1.0],
            toy_w0: [0.0, 0.0],
            toy_steps: 20,
            mu_sgd: None,
            mu_momentum: None,
            mu_csgd: None,
            grid_range: [-0.5, 1.5],
            grid_points: 41,
            paths_inputs: 20,
            paths_outputs: 2,
            paths_samples: 10,
            fd_step: 1e-6,
            batch_file: None,
            epsilon: 0.0,
        }
    }
}

impl RunConfig {
    pub fn step_params(&self) -> StepParams {
        StepParams {
            mu: self.mu,
            beta: self.momentum,
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            eps: self.adam_eps,
        }
    }

    pub fn transform_params(&self, default_lambda: f64) -> TransformParams {
        TransformParams {
            lambda: self.lambda.unwrap_or(default_lambda),
            epsilon: self.epsilon,
        }
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        parse_config(&text)
    }

    /// Output directory: `out` key, else `out/`.
    pub fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("out"))
    }
}

struct Field<'a> {
    line: usize,
    key: &'a str,
    value: &'a str,
}

impl Field<'_> {
    fn err(&self, msg: impl Into<String>) -> Error {
        Error::Config {
            line: self.line,
            key: self.key.to_string(),
            msg: msg.into(),
        }
    }

    fn real(&self) -> Result<f64> {
        let v: f64 = self
            .value
            .parse()
            .map_err(|_| self.err(format!("`{}` is not a number", self.value)))?;
        if !v.is_finite() {
            return Err(self.err("must be finite"));
        }
        Ok(v)
    }

    fn positive(&self) -> Result<f64> {
        let v = self.real()?;
        if v <= 0.0 {
            return Err(self.err(format!("must be positive, got {v}")));
        }
        Ok(v)
    }

    fn nonnegative(&self) -> Result<f64> {
        let v = self.real()?;
        if v < 0.0 {
            return Err(self.err(format!("must be nonnegative, got {v}")));
        }
        Ok(v)
    }

    fn unit_interval(&self) -> Result<f64> {
        let v = self.real()?;
        if !(0.0..1.0).contains(&v) {
            return Err(self.err(format!("must lie in [0, 1), got {v}")));
        }
        Ok(v)
    }

    fn count(&self) -> Result<usize> {
        self.value
            .parse()
            .map_err(|_| self.err(format!("`{}` is not a nonnegative integer", self.value)))
    }

    fn positive_count(&self) -> Result<usize> {
        let v = self.count()?;
        if v == 0 {
            return Err(self.err("must be at least 1"));
        }
        Ok(v)
    }

    fn flag(&self) -> Result<bool> {
        match self.value {
            "true" | "yes" | "1" => Ok(true),
            "false" | "no" | "0" => Ok(false),
            other => Err(self.err(format!("`{other}` is not a boolean"))),
        }
    }

    fn path(&self) -> Result<PathBuf> {
        if self.value.is_empty() {
            return Err(self.err("empty path"));
        }
        Ok(PathBuf::from(self.value))
    }

    fn items(&self) -> Vec<Field<'_>> {
        self.value
            .split(',')
            .map(|v| Field {
                line: self.line,
                key: self.key,
                value: v.trim(),
            })
            .collect()
    }

    fn reals(&self, each: impl Fn(&Field) -> Result<f64>) -> Result<Vec<f64>> {
        self.items().iter().map(each).collect()
    }

    fn pair(&self) -> Result<[f64; 2]> {
        match self.reals(|x| x.real())?.as_slice() {
            [a, b] => Ok([*a, *b]),
            other => Err(self.err(format!("expected two values, got {}", other.len()))),
        }
    }

    fn named<T>(&self, parse: fn(&str) -> Result<T>) -> Result<T> {
        parse(self.value).map_err(|e| self.err(e.to_string()))
    }
}

pub fn parse_config(text: &str) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    let mut seen = HashSet::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            return Err(Error::Config {
                line,
                key: content.to_string(),
                msg: "expected `key = value`".into(),
            });
        };
        let f = Field {
            line,
            key: key.trim(),
            value: value.trim(),
        };
        if !seen.insert(f.key.to_string()) {
            return Err(f.err("key given more than once"));
        }
        apply(&mut cfg, &f)?;
    }
    Ok(cfg)
}

fn apply(cfg: &mut RunConfig, f: &Field) -> Result<()> {
    match f.key {
        "seed" => cfg.seed = f.value.parse().map_err(|_| f.err("not an unsigned integer"))?,
        "out" => cfg.out = Some(f.path()?),
        "dataset" => {
            cfg.dataset = Some(match f.value {
                "idx" => DatasetKind::Idx,
                "cifar10" => DatasetKind::Cifar10,
                other => return Err(f.err(format!("unknown dataset `{other}` (idx, cifar10)"))),
            })
        }
        "images" => cfg.images = Some(f.path()?),
        "labels" => cfg.labels = Some(f.path()?),
        "cifar_dir" => cfg.cifar_dir = Some(f.path()?),
        "limit" => cfg.limit = f.count()?,
        "normalize" => cfg.normalize = f.named(NormalizeMode::from_name)?,
        "arch" => {
            let sizes = f
                .items()
                .iter()
                .map(Field::positive_count)
                .collect::<Result<Vec<_>>>()?;
            if sizes.len() < 2 {
                return Err(f.err("needs at least an input and an output size"));
            }
            cfg.arch = sizes;
        }
        "activation" => {
            let a = f.named(Activation::from_name)?;
            if a == Activation::Softmax {
                return Err(f.err("softmax is implied by the cross-entropy loss, not a hidden activation"));
            }
            cfg.activation = a;
        }
        "loss" => cfg.loss = f.named(Loss::from_name)?,
        "bias" => cfg.bias = f.flag()?,
        "init" => cfg.init = f.named(InitScheme::from_name)?,
        "conv" => {
            let v = f
                .items()
                .iter()
                .map(Field::count)
                .collect::<Result<Vec<_>>>()?;
            let [out_channels, kernel_h, kernel_w, stride, pad] = v[..] else {
                return Err(f.err("expected out_channels,kernel_h,kernel_w,stride,pad"));
            };
            if out_channels == 0 || kernel_h == 0 || kernel_w == 0 || stride == 0 {
                return Err(f.err("channels, kernel sizes and stride must be at least 1"));
            }
            cfg.conv = Some(ConvSpec {
                out_channels,
                kernel_h,
                kernel_w,
                stride,
                pad,
            });
        }
        "lr_multipliers" => cfg.lr_multipliers = Some(f.reals(|x| x.positive())?),
        "rule" => {
            let (_, step) = split_rule_name(f.value);
            let steps = StepRegistry::default();
            if !steps.names().contains(&step) {
                return Err(f.err(format!(
                    "unknown rule `{}` (one of {}, optionally prefixed with `c-`)",
                    f.value,
                    steps.names().join(", ")
                )));
            }
            cfg.rule = f.value.to_string();
        }
        "mu" => cfg.mu = f.positive()?,
        "lambda" => cfg.lambda = Some(f.nonnegative()?),
        "momentum" => cfg.momentum = f.unit_interval()?,
        "adam_beta1" => cfg.adam_beta1 = f.unit_interval()?,
        "adam_beta2" => cfg.adam_beta2 = f.unit_interval()?,
        "adam_eps" => cfg.adam_eps = f.positive()?,
        "epochs" => cfg.epochs = f.count()?,
        "batch_size" => cfg.batch_size = f.positive_count()?,
        "report_every" => cfg.report_every = f.positive_count()?,
        "record_wall_time" => cfg.record_wall_time = f.flag()?,
        "toy_x" => cfg.toy_x = f.pair()?,
        "toy_t" => cfg.toy_t = f.pair()?,
        "toy_w0" => cfg.toy_w0 = f.pair()?,
        "toy_steps" => cfg.toy_steps = f.positive_count()?,
        "mu_sgd" => cfg.mu_sgd = Some(f.reals(|x| x.positive())?),
        "mu_momentum" => cfg.mu_momentum = Some(f.reals(|x| x.positive())?),
        "mu_csgd" => cfg.mu_csgd = Some(f.reals(|x| x.positive())?),
        "grid_range" => {
            let r = f.pair()?;
            if r[0] >= r[1] {
                return Err(f.err("lower bound must be below upper bound"));
            }
            cfg.grid_range = r;
        }
        "grid_points" => {
            let n = f.count()?;
            if n < 2 {
                return Err(f.err("need at least 2 grid points"));
            }
            cfg.grid_points = n;
        }
        "paths_inputs" => cfg.paths_inputs = f.positive_count()?,
        "paths_outputs" => cfg.paths_outputs = f.positive_count()?,
        "paths_samples" => cfg.paths_samples = f.positive_count()?,
        "fd_step" => cfg.fd_step = f.positive()?,
        "batch_file" => cfg.batch_file = Some(f.path()?),
        "epsilon" => cfg.epsilon = f.nonnegative()?,
        _ => return Err(f.err("unknown key")),
    }
    Ok(())
}
