use std::borrow::Cow;
use std::path::Path;
use std::time::Instant;

use super::{write_train_records, Report};
use crate::config::{DatasetKind, RunConfig};
use crate::conv::{ConvCache, ConvLayer};
use crate::data::{batch_iter, load_cifar10, load_idx, normalize, Dataset};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::nn::{backward_directions, init_weights, Activation, Loss, Network};
use crate::optim::UpdateRule;

const DEFAULT_LAMBDA: f64 = 1e-3;
/// Keeps the conv weights off the stream the dense layers draw from.
const CONV_SEED_SALT: u64 = 0x636f_6e76;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainRecord {
    pub iteration: usize,
    /// Epoch the iteration belongs to; 0 before training.
    pub epoch: usize,
    /// Cumulative time spent in update steps.
    pub wall_ms: f64,
    /// Mean loss per sample over the whole split.
    pub loss: f64,
    pub accuracy: f64,
}

/// An optional ReLU convolution feeding a dense network.
#[derive(Debug, Clone)]
pub struct Model {
    pub conv: Option<ConvLayer>,
    pub net: Network,
    pub loss: Loss,
}

impl Model {
    fn features<'a>(&self, x: &'a Matrix) -> Result<(Cow<'a, Matrix>, Option<ConvCache>)> {
        match &self.conv {
            Some(conv) => {
                let cache = conv.forward(x)?;
                Ok((Cow::Owned(cache.output.clone()), Some(cache)))
            }
            None => Ok((Cow::Borrowed(x), None)),
        }
    }

    /// Mean per-sample loss and accuracy on `ds`.
    pub fn evaluate(&self, ds: &Dataset) -> Result<(f64, f64)> {
        let (input, _) = self.features(&ds.features)?;
        let cache = self.net.forward(&input, &ds.targets(), self.loss)?;
        let out = &cache.x[cache.x.len() - 1];
        let correct = (0..out.cols())
            .filter(|&j| {
                let col = out.column(j);
                let best = (0..col.len()).fold(0, |b, i| if col[i] > col[b] { i } else { b });
                best == ds.labels[j]
            })
            .count();
        let m = ds.len() as f64;
        Ok((cache.loss / m, correct as f64 / m))
    }

    /// One mini-batch update.
    pub fn step(&mut self, rule: &mut UpdateRule, x: &Matrix, t: &Matrix) -> Result<()> {
        let (input, conv_cache) = self.features(x)?;
        let cache = self.net.forward(&input, t, self.loss)?;
        let dirs = backward_directions(&self.net, &cache, rule.transform.as_ref())?;
        let mut directions = Vec::with_capacity(dirs.direction.len() + 1);
        if let (Some(conv), Some(cc)) = (&self.conv, &conv_cache) {
            directions.push(conv.direction(cc, &dirs.dx[0], rule.transform.as_ref())?);
        }
        directions.extend(dirs.direction);
        let mut deltas = rule.step.step(&mut rule.state, &directions)?;
        if let Some(conv) = &mut self.conv {
            let delta = deltas.remove(0).scale(conv.lr_multiplier);
            let w = conv.weights.add(&delta)?;
            if !w.is_finite() {
                return Err(Error::NonFinite("conv weight update"));
            }
            conv.weights = w;
        }
        for (d, layer) in deltas.iter_mut().zip(self.net.layers()) {
            if layer.lr_multiplier != 1.0 {
                d.scale_in_place(layer.lr_multiplier);
            }
        }
        self.net.apply_deltas(&deltas)
    }
}

/// Loads the configured dataset, keeps the first `limit` samples and
/// normalizes them.
pub fn load_dataset(cfg: &RunConfig) -> Result<Dataset> {
    let kind = match (cfg.dataset, &cfg.images, &cfg.cifar_dir) {
        (Some(k), ..) => k,
        (None, Some(_), _) => DatasetKind::Idx,
        (None, None, Some(_)) => DatasetKind::Cifar10,
        (None, None, None) => return Err(Error::config("dataset", "no dataset configured")),
    };
    let ds = match kind {
        DatasetKind::Idx => {
            let images = cfg.images.as_ref().ok_or_else(|| Error::config("images", "required for idx datasets"))?;
            let labels = cfg.labels.as_ref().ok_or_else(|| Error::config("labels", "required for idx datasets"))?;
            load_idx(images, labels)?
        }
        DatasetKind::Cifar10 => {
            let dir = cfg
                .cifar_dir
                .as_ref()
                .ok_or_else(|| Error::config("cifar_dir", "required for cifar10 datasets"))?;
            load_cifar10(dir)?
        }
    };
    let ds = if cfg.limit > 0 { ds.take(cfg.limit) } else { ds };
    Ok(normalize(&ds, cfg.normalize))
}

/// Builds and initializes the model described by `cfg` for inputs shaped
/// like `ds`.
pub fn build_model(cfg: &RunConfig, ds: &Dataset) -> Result<Model> {
    let Some(&classes) = cfg.arch.last() else {
        return Err(Error::config("arch", "layer sizes are required"));
    };
    if classes < ds.num_classes {
        return Err(Error::config(
            "arch",
            format!("output size {classes} is smaller than the {} classes in the data", ds.num_classes),
        ));
    }
    let conv = match cfg.conv {
        Some(spec) => {
            if cfg.lambda == Some(0.0) {
                return Err(Error::config(
                    "lambda",
                    "a conv layer needs lambda > 0: its patch Gram matrix has more columns than rows and is singular",
                ));
            }
            let dims = ds
                .image_dims
                .ok_or_else(|| Error::config("conv", "the dataset has no image layout"))?;
            let mut layer = ConvLayer::new(dims, spec)?;
            layer.init(cfg.init, cfg.seed ^ CONV_SEED_SALT);
            Some(layer)
        }
        None => None,
    };
    let input = conv.as_ref().map_or(ds.dim(), |c| c.output_dims().len());
    if cfg.arch[0] != input {
        return Err(Error::config(
            "arch",
            format!("first size is {} but the network input has {input} features", cfg.arch[0]),
        ));
    }
    let output = match cfg.loss {
        Loss::CrossEntropy => Activation::Softmax,
        Loss::Mse => Activation::Linear,
    };
    let mut net = Network::mlp(&cfg.arch, cfg.activation, output, cfg.bias)?;
    init_weights(&mut net, cfg.init, cfg.seed);
    let mut model = Model {
        conv,
        net,
        loss: cfg.loss,
    };
    if let Some(mults) = &cfg.lr_multipliers {
        let conv_layers = usize::from(model.conv.is_some());
        if mults.len() != model.net.depth() + conv_layers {
            return Err(Error::config(
                "lr_multipliers",
                format!("{} values for {} weight layers", mults.len(), model.net.depth() + conv_layers),
            ));
        }
        if let Some(conv) = &mut model.conv {
            conv.lr_multiplier = mults[0];
        }
        for (layer, &m) in model.net.layers_mut().iter_mut().zip(&mults[conv_layers..]) {
            layer.lr_multiplier = m;
        }
    }
    Ok(model)
}

/// Trains on an already prepared dataset and returns the loss curve.
///
/// A record is taken before the first step, every `report_every`
/// iterations and at the end of every epoch, each on the whole of `ds`.
pub fn train_dataset(ds: &Dataset, cfg: &RunConfig) -> Result<Vec<TrainRecord>> {
    if cfg.batch_size > ds.len() {
        return Err(Error::config(
            "batch_size",
            format!("{} exceeds the {} available samples", cfg.batch_size, ds.len()),
        ));
    }
    let mut model = build_model(cfg, ds)?;
    let mut ds = Cow::Borrowed(ds);
    if model.net.output_dim() != ds.num_classes {
        ds.to_mut().num_classes = model.net.output_dim();
    }
    let mut rule = UpdateRule::from_name(&cfg.rule, &cfg.transform_params(DEFAULT_LAMBDA), &cfg.step_params())?;

    let per_epoch = ds.len() / cfg.batch_size;
    let mut records = Vec::new();
    let mut wall_ms = 0.0;
    let mut record = |model: &Model, iteration: usize, wall_ms: f64| -> Result<()> {
        let (loss, accuracy) = model.evaluate(&ds)?;
        records.push(TrainRecord {
            iteration,
            epoch: iteration.div_ceil(per_epoch),
            wall_ms: if cfg.record_wall_time { wall_ms } else { 0.0 },
            loss,
            accuracy,
        });
        Ok(())
    };
    record(&model, 0, 0.0)?;
    let mut iteration = 0;
    for epoch in 0..cfg.epochs {
        for (x, t) in batch_iter(&ds, cfg.batch_size, cfg.seed, epoch as u64) {
            let start = Instant::now();
            model.step(&mut rule, &x, &t)?;
            wall_ms += start.elapsed().as_secs_f64() * 1e3;
            iteration += 1;
            if iteration % cfg.report_every == 0 || iteration % per_epoch == 0 {
                record(&model, iteration, wall_ms)?;
            }
        }
    }
    Ok(records)
}

pub fn train(cfg: &RunConfig) -> Result<Vec<TrainRecord>> {
    train_dataset(&load_dataset(cfg)?, cfg)
}

pub(super) fn run(cfg: &RunConfig, out: &Path) -> Result<Report> {
    let records = train(cfg)?;
    let path = out.join(format!("train_{}.csv", cfg.rule));
    write_train_records(&path, &records)?;
    let last = records[records.len() - 1];
    Ok(Report {
        files: vec![path],
        summary: vec![format!(
            "{} after {} iterations: loss {:.6}, accuracy {:.4}",
            cfg.rule, last.iteration, last.loss, last.accuracy
        )],
    })
}
