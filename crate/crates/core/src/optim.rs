//! Step rules and their composition with a gradient transform.
//!
//! A step rule never sees raw backprop quantities: it receives the μ-free
//! direction produced by a [`GradientTransform`] (`ΔZ Xᵀ` for plain
//! backpropagation, `ΔZ (XᵀX + λI)⁻¹ Xᵀ` for consequentialism) and treats
//! it as the gradient. That is all the "C-" variants (C-SGD, C-Nesterov,
//! C-Adam) amount to.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::nn::{
    backward_directions, ForwardCache, GradientTransform, Network, TransformParams,
    TransformRegistry,
};

/// Per-layer optimizer state. Buffers are allocated lazily on the first step.
#[derive(Debug, Clone, Default)]
pub struct OptState {
    pub velocity: Vec<Matrix>,
    pub first_moment: Vec<Matrix>,
    pub second_moment: Vec<Matrix>,
    pub t: u64,
}

impl OptState {
    fn prepare(buffers: &mut Vec<Matrix>, grads: &[Matrix]) -> Result<()> {
        if buffers.is_empty() {
            *buffers = grads.iter().map(|g| Matrix::zeros(g.rows(), g.cols())).collect();
            return Ok(());
        }
        if buffers.len() != grads.len() {
            return Err(Error::ShapeMismatch(format!(
                "optimizer state has {} layers, gradient has {}",
                buffers.len(),
                grads.len()
            )));
        }
        for (i, (b, g)) in buffers.iter().zip(grads).enumerate() {
            if b.shape() != g.shape() {
                return Err(Error::ShapeMismatch(format!(
                    "layer {i}: state {:?} vs gradient {:?}",
                    b.shape(),
                    g.shape()
                )));
            }
        }
        Ok(())
    }
}

pub trait StepRule: Send + Sync {
    fn name(&self) -> &str;

    fn learning_rate(&self) -> f64;

    /// Turns per-layer gradients into per-layer weight changes, updating `state`.
    fn step(&self, state: &mut OptState, grads: &[Matrix]) -> Result<Vec<Matrix>>;
}

#[derive(Debug, Clone, Copy)]
pub struct Sgd {
    pub mu: f64,
}

impl StepRule for Sgd {
    fn name(&self) -> &str {
        "sgd"
    }

    fn learning_rate(&self) -> f64 {
        self.mu
    }

    fn step(&self, state: &mut OptState, grads: &[Matrix]) -> Result<Vec<Matrix>> {
        state.t += 1;
        Ok(grads.iter().map(|g| g.scale(-self.mu)).collect())
    }
}

/// Classical momentum: v ← βv − μg, Δ = v.
#[derive(Debug, Clone, Copy)]
pub struct Momentum {
    pub mu: f64,
    pub beta: f64,
}

impl StepRule for Momentum {
    fn name(&self) -> &str {
        "momentum"
    }

    fn learning_rate(&self) -> f64 {
        self.mu
    }

    fn step(&self, state: &mut OptState, grads: &[Matrix]) -> Result<Vec<Matrix>> {
        OptState::prepare(&mut state.velocity, grads)?;
        state.t += 1;
        let mut deltas = Vec::with_capacity(grads.len());
        for (v, g) in state.velocity.iter_mut().zip(grads) {
            for (vi, gi) in v.data_mut().iter_mut().zip(g.data()) {
                *vi = self.beta * *vi - self.mu * gi;
            }
            deltas.push(v.clone());
        }
        Ok(deltas)
    }
}

/// Nesterov momentum in the look-ahead-free form: v ← βv − μg, Δ = βv − μg.
#[derive(Debug, Clone, Copy)]
pub struct Nesterov {
    pub mu: f64,
    pub beta: f64,
}

impl StepRule for Nesterov {
    fn name(&self) -> &str {
        "nesterov"
    }

    fn learning_rate(&self) -> f64 {
        self.mu
    }

    fn step(&self, state: &mut OptState, grads: &[Matrix]) -> Result<Vec<Matrix>> {
        OptState::prepare(&mut state.velocity, grads)?;
        state.t += 1;
        let mut deltas = Vec::with_capacity(grads.len());
        for (v, g) in state.velocity.iter_mut().zip(grads) {
            let mut delta = Matrix::zeros(g.rows(), g.cols());
            for ((vi, gi), di) in v.data_mut().iter_mut().zip(g.data()).zip(delta.data_mut()) {
                *vi = self.beta * *vi - self.mu * gi;
                *di = self.beta * *vi - self.mu * gi;
            }
            deltas.push(delta);
        }
        Ok(deltas)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Adam {
    pub mu: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl StepRule for Adam {
    fn name(&self) -> &str {
        "adam"
    }

    fn learning_rate(&self) -> f64 {
        self.mu
    }

    fn step(&self, state: &mut OptState, grads: &[Matrix]) -> Result<Vec<Matrix>> {
        OptState::prepare(&mut state.first_moment, grads)?;
        OptState::prepare(&mut state.second_moment, grads)?;
        state.t += 1;
        let c1 = 1.0 - self.beta1.powf(state.t as f64);
        let c2 = 1.0 - self.beta2.powf(state.t as f64);
        let mut deltas = Vec::with_capacity(grads.len());
        for ((m, v), g) in state
            .first_moment
            .iter_mut()
            .zip(state.second_moment.iter_mut())
            .zip(grads)
        {
            let mut delta = Matrix::zeros(g.rows(), g.cols());
            for (((mi, vi), &gi), di) in m
                .data_mut()
                .iter_mut()
                .zip(v.data_mut().iter_mut())
                .zip(g.data())
                .zip(delta.data_mut())
            {
                *mi = self.beta1 * *mi + (1.0 - self.beta1) * gi;
                *vi = self.beta2 * *vi + (1.0 - self.beta2) * gi * gi;
                let m_hat = *mi / c1;
                let v_hat = *vi / c2;
                *di = -self.mu * m_hat / (v_hat.sqrt() + self.eps);
            }
            deltas.push(delta);
        }
        Ok(deltas)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct StepParams {
    pub mu: f64,
    /// Momentum coefficient for `momentum` and `nesterov`.
    pub beta: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for StepParams {
    fn default() -> Self {
        StepParams {
            mu: 0.01,
            beta: 0.9,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl StepParams {
    fn validate(&self) -> Result<()> {
        let unit = |name: &str, v: f64| {
            if (0.0..1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::config(name, format!("must lie in [0, 1), got {v}")))
            }
        };
        if !(self.mu >= 0.0) || !self.mu.is_finite() {
            return Err(Error::config("mu", format!("must be nonnegative, got {}", self.mu)));
        }
        unit("momentum", self.beta)?;
        unit("adam_beta1", self.beta1)?;
        unit("adam_beta2", self.beta2)?;
        if !(self.eps > 0.0) {
            return Err(Error::config("adam_eps", format!("must be positive, got {}", self.eps)));
        }
        Ok(())
    }
}

type StepFactory = fn(&StepParams) -> Box<dyn StepRule>;

/// Name → constructor table for step rules.
pub struct StepRegistry {
    factories: BTreeMap<String, StepFactory>,
}

impl StepRegistry {
    pub fn empty() -> Self {
        StepRegistry {
            factories: BTreeMap::new(),
        }
    }

    pub fn register(&mut self, name: &str, factory: StepFactory) {
        self.factories.insert(name.to_string(), factory);
    }

    pub fn names(&self) -> Vec<&str> {
        self.factories.keys().map(String::as_str).collect()
    }

    pub fn create(&self, name: &str, params: &StepParams) -> Result<Box<dyn StepRule>> {
        params.validate()?;
        let factory = self.factories.get(name).ok_or_else(|| Error::UnknownName {
            kind: "step rule",
            name: name.to_string(),
            available: self.names().join(", "),
        })?;
        Ok(factory(params))
    }
}

impl Default for StepRegistry {
    fn default() -> Self {
        let mut r = StepRegistry::empty();
        r.register("sgd", |p| Box::new(Sgd { mu: p.mu }));
        r.register("momentum", |p| Box::new(Momentum { mu: p.mu, beta: p.beta }));
        r.register("nesterov", |p| Box::new(Nesterov { mu: p.mu, beta: p.beta }));
        r.register("adam", |p| {
            Box::new(Adam {
                mu: p.mu,
                beta1: p.beta1,
                beta2: p.beta2,
                eps: p.eps,
            })
        });
        r
    }
}

/// Splits a rule name like `c-nesterov` into (transform, step rule).
pub fn split_rule_name(name: &str) -> (&str, &str) {
    match name.strip_prefix("c-") {
        Some(step) => ("consequentialism", step),
        None => ("plain", name),
    }
}

/// A gradient transform followed by a step rule, with its optimizer state.
pub struct UpdateRule {
    pub transform: Box<dyn GradientTransform>,
    pub step: Box<dyn StepRule>,
    pub state: OptState,
}

impl UpdateRule {
    pub fn new(transform: Box<dyn GradientTransform>, step: Box<dyn StepRule>) -> Self {
        UpdateRule {
            transform,
            step,
            state: OptState::default(),
        }
    }

    /// Builds a rule from a name such as `sgd` or `c-adam` using the default
    /// registries.
    pub fn from_name(name: &str, transform: &TransformParams, step: &StepParams) -> Result<Self> {
        let (t, s) = split_rule_name(name);
        Ok(UpdateRule::new(
            TransformRegistry::default().create(t, transform)?,
            StepRegistry::default().create(s, step)?,
        ))
    }

    pub fn name(&self) -> String {
        match self.transform.name() {
            "plain" => self.step.name().to_string(),
            "consequentialism" => format!("c-{}", self.step.name()),
            other => format!("{other}:{}", self.step.name()),
        }
    }

    /// Backward pass, step rule, per-layer multipliers, weight update.
    pub fn apply(&mut self, net: &mut Network, cache: &ForwardCache) -> Result<()> {
        let dirs = backward_directions(net, cache, self.transform.as_ref())?;
        let mut deltas = self.step.step(&mut self.state, &dirs.direction)?;
        for (d, layer) in deltas.iter_mut().zip(net.layers()) {
            if layer.lr_multiplier != 1.0 {
                d.scale_in_place(layer.lr_multiplier);
            }
        }
        net.apply_deltas(&deltas)
    }
}
