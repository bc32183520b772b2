//! Feed-forward networks with hand-derived backward passes.
//!
//! Samples are stored one per column: a layer maps `X` (D_in×N) to
//! `Z = W X` (D_out×N) and then `X_next = φ(Z)`. Losses are summed over the
//! batch (½‖t − x‖² per sample for MSE); averaging happens only when metrics
//! are reported.

mod diagnostics;
mod init;
mod transform;

use std::borrow::Cow;

pub use diagnostics::{
    interference_matrix, lms_update_from_virtual_targets, naive_normalized_update,
    predicted_error_change, virtual_targets, InterferenceMode,
};
pub use init::{init_matrix, init_weights, InitScheme};
pub use transform::{
    Consequentialism, GradientTransform, NaiveNormalized, Plain, TransformParams,
    TransformRegistry,
};

use crate::error::{Error, Result};
use crate::linalg::{gemm, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Linear,
    Relu,
    /// Only valid on the final layer together with [`Loss::CrossEntropy`].
    Softmax,
}

impl Activation {
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "linear" => Ok(Activation::Linear),
            "relu" => Ok(Activation::Relu),
            "softmax" => Ok(Activation::Softmax),
            other => Err(Error::UnknownName {
                kind: "activation",
                name: other.to_string(),
                available: "linear, relu, softmax".into(),
            }),
        }
    }

    pub fn apply(self, z: &Matrix) -> Matrix {
        match self {
            Activation::Linear => z.clone(),
            Activation::Relu => z.map(|v| if v > 0.0 { v } else { 0.0 }),
            Activation::Softmax => softmax_columns(z),
        }
    }

    /// Elementwise φ′(z). ReLU′(0) is 0.
    ///
    /// Softmax has no elementwise derivative; it is always fused with the loss.
    pub fn derivative(self, z: &Matrix) -> Matrix {
        match self {
            Activation::Linear => Matrix::filled(z.rows(), z.cols(), 1.0),
            Activation::Relu => z.map(|v| if v > 0.0 { 1.0 } else { 0.0 }),
            Activation::Softmax => unreachable!("softmax derivative is fused with the loss"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Loss {
    /// ½ Σ (t − x)², summed over outputs and batch.
    Mse,
    /// −Σ t·log softmax(z), summed over the batch. Requires a softmax output.
    CrossEntropy,
}

impl Loss {
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "mse" => Ok(Loss::Mse),
            "xent" | "cross-entropy" | "cross_entropy" => Ok(Loss::CrossEntropy),
            other => Err(Error::UnknownName {
                kind: "loss",
                name: other.to_string(),
                available: "mse, xent".into(),
            }),
        }
    }
}

/// Column-wise softmax with the usual max shift.
pub fn softmax_columns(z: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(z.rows(), z.cols());
    for j in 0..z.cols() {
        let max = (0..z.rows()).fold(f64::NEG_INFINITY, |m, i| m.max(z[(i, j)]));
        let mut sum = 0.0;
        for i in 0..z.rows() {
            let e = (z[(i, j)] - max).exp();
            out[(i, j)] = e;
            sum += e;
        }
        for i in 0..z.rows() {
            out[(i, j)] /= sum;
        }
    }
    out
}

/// Loss value and the gradient that seeds the backward pass.
///
/// For MSE `output` is X^(L) and the gradient is ∂L/∂X^(L) = −(T − X).
/// For softmax + cross-entropy `output` must be the logits Z^(L−1) and the
/// returned gradient is the fused ∂L/∂Z = softmax(Z) − T.
pub fn loss_and_output_grad(
    output: &Matrix,
    t: &Matrix,
    final_activation: Activation,
    loss: Loss,
) -> Result<(f64, Matrix)> {
    if output.shape() != t.shape() {
        return Err(Error::DimensionMismatch {
            op: "loss",
            lhs: output.shape(),
            rhs: t.shape(),
        });
    }
    match (loss, final_activation) {
        (Loss::Mse, Activation::Softmax) => Err(Error::UnsupportedCombination(
            "softmax output with MSE loss".into(),
        )),
        (Loss::CrossEntropy, a) if a != Activation::Softmax => {
            Err(Error::UnsupportedCombination(format!(
                "cross-entropy loss requires a softmax output layer, found {a:?}"
            )))
        }
        (Loss::Mse, _) => {
            let grad = output.sub(t)?;
            let value = 0.5 * grad.data().iter().map(|e| e * e).sum::<f64>();
            Ok((value, grad))
        }
        (Loss::CrossEntropy, _) => {
            let mut value = 0.0;
            for j in 0..output.cols() {
                let max = (0..output.rows()).fold(f64::NEG_INFINITY, |m, i| m.max(output[(i, j)]));
                let lse = max
                    + (0..output.rows())
                        .map(|i| (output[(i, j)] - max).exp())
                        .sum::<f64>()
                        .ln();
                for i in 0..output.rows() {
                    let ti = t[(i, j)];
                    if ti != 0.0 {
                        value -= ti * (output[(i, j)] - lse);
                    }
                }
            }
            let grad = softmax_columns(output).sub(t)?;
            Ok((value, grad))
        }
    }
}

#[derive(Debug, Clone)]
pub struct Layer {
    /// D_out × D_in, or D_out × (D_in + 1) when `bias` is set (last column).
    pub weights: Matrix,
    pub activation: Activation,
    pub bias: bool,
    /// Scales this layer's weight change after the step rule.
    pub lr_multiplier: f64,
}

impl Layer {
    pub fn new(in_dim: usize, out_dim: usize, activation: Activation) -> Self {
        Layer {
            weights: Matrix::zeros(out_dim, in_dim),
            activation,
            bias: false,
            lr_multiplier: 1.0,
        }
    }

    pub fn with_bias(in_dim: usize, out_dim: usize, activation: Activation) -> Self {
        Layer {
            weights: Matrix::zeros(out_dim, in_dim + 1),
            activation,
            bias: true,
            lr_multiplier: 1.0,
        }
    }

    pub fn from_weights(weights: Matrix, activation: Activation) -> Self {
        Layer {
            weights,
            activation,
            bias: false,
            lr_multiplier: 1.0,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weights.cols() - usize::from(self.bias)
    }

    pub fn out_dim(&self) -> usize {
        self.weights.rows()
    }

    /// The matrix the weights actually multiply: `x`, or `x` with a ones row.
    pub fn effective_input<'a>(&self, x: &'a Matrix) -> Cow<'a, Matrix> {
        if self.bias {
            Cow::Owned(x.with_ones_row())
        } else {
            Cow::Borrowed(x)
        }
    }
}

#[derive(Debug, Clone)]
pub struct Network {
    layers: Vec<Layer>,
}

impl Network {
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::ShapeMismatch("a network needs at least one layer".into()));
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].out_dim() != pair[1].in_dim() {
                return Err(Error::ShapeMismatch(format!(
                    "layer {i} outputs {} values but layer {} expects {}",
                    pair[0].out_dim(),
                    i + 1,
                    pair[1].in_dim()
                )));
            }
        }
        let last = layers.len() - 1;
        if let Some(i) = layers[..last]
            .iter()
            .position(|l| l.activation == Activation::Softmax)
        {
            return Err(Error::UnsupportedCombination(format!(
                "softmax is only allowed on the final layer (found on layer {i})"
            )));
        }
        Ok(Network { layers })
    }

    /// A fully connected stack with `sizes = [D0, D1, ..., DL]`.
    pub fn mlp(sizes: &[usize], hidden: Activation, output: Activation, bias: bool) -> Result<Self> {
        if sizes.len() < 2 {
            return Err(Error::ShapeMismatch(
                "an architecture needs at least input and output sizes".into(),
            ));
        }
        let depth = sizes.len() - 1;
        let layers = sizes
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let act = if i + 1 == depth { output } else { hidden };
                if bias {
                    Layer::with_bias(w[0], w[1], act)
                } else {
                    Layer::new(w[0], w[1], act)
                }
            })
            .collect();
        Network::new(layers)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    pub fn final_activation(&self) -> Activation {
        self.layers[self.layers.len() - 1].activation
    }

    /// Network output X^(L) for a batch, without caching.
    pub fn predict(&self, x0: &Matrix) -> Result<Matrix> {
        let mut x = x0.clone();
        for layer in &self.layers {
            let z = gemm(&layer.weights, &layer.effective_input(&x), false, false)?;
            x = layer.activation.apply(&z);
        }
        Ok(x)
    }

    /// Forward pass keeping every X^(ℓ) and Z^(ℓ) for the backward pass.
    pub fn forward(&self, x0: &Matrix, t: &Matrix, loss: Loss) -> Result<ForwardCache> {
        if x0.rows() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                op: "forward input",
                lhs: (self.input_dim(), x0.cols()),
                rhs: x0.shape(),
            });
        }
        if t.shape() != (self.output_dim(), x0.cols()) {
            return Err(Error::DimensionMismatch {
                op: "forward target",
                lhs: (self.output_dim(), x0.cols()),
                rhs: t.shape(),
            });
        }
        let mut xs = Vec::with_capacity(self.depth() + 1);
        let mut zs = Vec::with_capacity(self.depth());
        xs.push(x0.clone());
        for layer in &self.layers {
            let x = &xs[xs.len() - 1];
            let z = gemm(&layer.weights, &layer.effective_input(x), false, false)?;
            xs.push(layer.activation.apply(&z));
            zs.push(z);
        }
        let fa = self.final_activation();
        let seed_input = if fa == Activation::Softmax {
            &zs[zs.len() - 1]
        } else {
            &xs[xs.len() - 1]
        };
        let (loss_value, output_grad) = loss_and_output_grad(seed_input, t, fa, loss)?;
        Ok(ForwardCache {
            x: xs,
            z: zs,
            loss: loss_value,
            output_grad,
        })
    }

    /// Adds per-layer weight changes, rejecting any that would make weights
    /// non-finite.
    pub fn apply_deltas(&mut self, deltas: &[Matrix]) -> Result<()> {
        if deltas.len() != self.layers.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} weight changes for {} layers",
                deltas.len(),
                self.layers.len()
            )));
        }
        let mut updated = Vec::with_capacity(deltas.len());
        for (layer, delta) in self.layers.iter().zip(deltas) {
            let w = layer.weights.add(delta)?;
            if !w.is_finite() {
                return Err(Error::NonFinite("weight update"));
            }
            updated.push(w);
        }
        for (layer, w) in self.layers.iter_mut().zip(updated) {
            layer.weights = w;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// X^(0) .. X^(L).
    pub x: Vec<Matrix>,
    /// Z^(0) .. Z^(L−1).
    pub z: Vec<Matrix>,
    pub loss: f64,
    /// ∂L/∂X^(L), or the fused ∂L/∂Z^(L−1) for a softmax output.
    pub output_grad: Matrix,
}

/// Per-layer results of a backward pass.
#[derive(Debug, Clone)]
pub struct GradBundle {
    /// ΔZ^(ℓ) = ∂L/∂Z^(ℓ).
    pub dz: Vec<Matrix>,
    /// Proposed weight changes (sign included).
    pub dw: Vec<Matrix>,
    /// ΔX^(ℓ) = ∂L/∂X^(ℓ) for ℓ = 0..L−1.
    pub dx: Vec<Matrix>,
    /// Virtual targets Z^(ℓ) − ΔZ^(ℓ), filled by [`GradBundle::with_virtual_targets`].
    pub vt: Option<Vec<Matrix>>,
}

impl GradBundle {
    pub fn with_virtual_targets(mut self, cache: &ForwardCache) -> Result<Self> {
        let vt = cache
            .z
            .iter()
            .zip(&self.dz)
            .map(|(z, dz)| virtual_targets(z, dz))
            .collect::<Result<Vec<_>>>()?;
        self.vt = Some(vt);
        Ok(self)
    }
}

/// μ-free backward pass: `direction[ℓ]` is what the transform makes of
/// ΔZ^(ℓ) and the layer input, so that plain SGD would change weights by
/// `−μ · direction[ℓ]`.
#[derive(Debug, Clone)]
pub struct Directions {
    pub dz: Vec<Matrix>,
    pub direction: Vec<Matrix>,
    pub dx: Vec<Matrix>,
}

pub fn backward_directions(
    net: &Network,
    cache: &ForwardCache,
    transform: &dyn GradientTransform,
) -> Result<Directions> {
    let depth = net.depth();
    if cache.z.len() != depth || cache.x.len() != depth + 1 {
        return Err(Error::ShapeMismatch(
            "forward cache does not belong to this network".into(),
        ));
    }
    let fused = net.final_activation() == Activation::Softmax;
    let mut dz = vec![Matrix::zeros(0, 0); depth];
    let mut direction = vec![Matrix::zeros(0, 0); depth];
    let mut dx = vec![Matrix::zeros(0, 0); depth];

    let mut upstream = cache.output_grad.clone();
    for l in (0..depth).rev() {
        let layer = &net.layers[l];
        let dz_l = if l + 1 == depth && fused {
            upstream
        } else {
            upstream.hadamard(&layer.activation.derivative(&cache.z[l]))?
        };
        let input = layer.effective_input(&cache.x[l]);
        direction[l] = transform.direction(&dz_l, &input)?;
        // Gradient flow to the layer below is the same for every transform.
        let back = gemm(&layer.weights, &dz_l, true, false)?;
        let back = if layer.bias { back.without_last_row() } else { back };
        dz[l] = dz_l;
        dx[l] = back.clone();
        upstream = back;
    }
    Ok(Directions { dz, direction, dx })
}

fn backward_with(
    net: &Network,
    cache: &ForwardCache,
    mu: f64,
    transform: &dyn GradientTransform,
) -> Result<GradBundle> {
    let Directions { dz, direction, dx } = backward_directions(net, cache, transform)?;
    let dw = direction
        .into_iter()
        .zip(net.layers())
        .map(|(d, layer)| d.scale(-mu * layer.lr_multiplier))
        .collect();
    Ok(GradBundle { dz, dw, dx, vt: None })
}

/// Standard backpropagation: ΔW^(ℓ) = −μ ΔZ^(ℓ) X^(ℓ)ᵀ.
pub fn backward_bp(net: &Network, cache: &ForwardCache, mu: f64) -> Result<GradBundle> {
    backward_with(net, cache, mu, &Plain)
}

/// Backpropagation with the consequentialism weight change
/// ΔW^(ℓ) = −μ ΔZ^(ℓ) (X^(ℓ)ᵀX^(ℓ) + λI)⁻¹ X^(ℓ)ᵀ.
///
/// ΔZ and ΔX are computed exactly as in [`backward_bp`].
pub fn backward_consequentialism(
    net: &Network,
    cache: &ForwardCache,
    mu: f64,
    lambda: f64,
) -> Result<GradBundle> {
    backward_with(net, cache, mu, &Consequentialism { lambda })
}
