use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::Report;
use crate::config::RunConfig;
use crate::data::one_hot;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::nn::{backward_directions, init_weights, Activation, InitScheme, Loss, Network, Plain};
use crate::rng::{stream, STREAM_CHECK};

/// Hidden pre-activations closer than this to a ReLU kink are resampled.
pub const KINK_MARGIN: f64 = 1e-3;
/// Gradients smaller than this are compared absolutely rather than relatively.
pub const GRAD_FLOOR: f64 = 1e-3;
const MAX_DRAWS: usize = 1000;

/// A small random network to check.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckNet {
    pub sizes: Vec<usize>,
    pub hidden: Activation,
    pub loss: Loss,
    pub bias: bool,
    pub batch: usize,
}

fn off_kinks(net: &Network, x: &Matrix) -> Result<bool> {
    let mut a = x.clone();
    for layer in net.layers() {
        let z = crate::linalg::gemm(&layer.weights, &layer.effective_input(&a), false, false)?;
        if layer.activation == Activation::Relu && z.data().iter().any(|v| v.abs() <= KINK_MARGIN) {
            return Ok(false);
        }
        a = layer.activation.apply(&z);
    }
    Ok(true)
}

/// Largest relative disagreement between the backpropagated gradient and
/// central differences of step `h`, over every weight of a random network.
pub fn grad_check(spec: &GradCheckNet, h: f64, seed: u64) -> Result<f64> {
    if !(h > 0.0) {
        return Err(Error::config("fd_step", format!("must be positive, got {h}")));
    }
    let output = match spec.loss {
        Loss::CrossEntropy => Activation::Softmax,
        Loss::Mse => Activation::Linear,
    };
    let mut net = Network::mlp(&spec.sizes, spec.hidden, output, spec.bias)?;
    init_weights(&mut net, InitScheme::Xavier, seed);

    let (d_in, d_out, n) = (net.input_dim(), net.output_dim(), spec.batch);
    let mut rng = stream(seed, STREAM_CHECK);
    let normal = |r: usize, c: usize, rng: &mut rand_chacha::ChaCha8Rng| {
        Matrix::from_vec(r, c, (0..r * c).map(|_| StandardNormal.sample(rng)).collect()).expect("sized")
    };
    let mut x = normal(d_in, n, &mut rng);
    let mut draws = 1;
    while !off_kinks(&net, &x)? {
        if draws == MAX_DRAWS {
            return Err(Error::DegenerateInput(format!(
                "no input batch within {MAX_DRAWS} draws keeps every ReLU input {KINK_MARGIN} away from 0"
            )));
        }
        x = normal(d_in, n, &mut rng);
        draws += 1;
    }
    let t = match spec.loss {
        Loss::CrossEntropy => one_hot(&(0..n).map(|_| rng.random_range(0..d_out)).collect::<Vec<_>>(), d_out),
        Loss::Mse => normal(d_out, n, &mut rng),
    };

    let cache = net.forward(&x, &t, spec.loss)?;
    let analytic = backward_directions(&net, &cache, &Plain)?.direction;
    let mut worst = 0.0_f64;
    for (l, grad) in analytic.iter().enumerate() {
        for k in 0..grad.data().len() {
            let original = net.layers()[l].weights.data()[k];
            net.layers_mut()[l].weights.data_mut()[k] = original + h;
            let up = net.forward(&x, &t, spec.loss)?.loss;
            net.layers_mut()[l].weights.data_mut()[k] = original - h;
            let down = net.forward(&x, &t, spec.loss)?.loss;
            net.layers_mut()[l].weights.data_mut()[k] = original;
            let numeric = (up - down) / (2.0 * h);
            let a = grad.data()[k];
            worst = worst.max((a - numeric).abs() / a.abs().max(numeric.abs()).max(GRAD_FLOOR));
        }
    }
    Ok(worst)
}

pub(super) fn run(cfg: &RunConfig, _out: &Path) -> Result<Report> {
    let sizes = if cfg.arch.is_empty() { vec![4, 5, 3] } else { cfg.arch.clone() };
    let spec = GradCheckNet {
        sizes,
        hidden: cfg.activation,
        loss: cfg.loss,
        bias: cfg.bias,
        batch: cfg.batch_size,
    };
    let err = grad_check(&spec, cfg.fd_step, cfg.seed)?;
    Ok(Report {
        files: Vec::new(),
        summary: vec![format!(
            "max relative error {err:.3e} (arch {:?}, batch {}, h {})",
            spec.sizes, spec.batch, cfg.fd_step
        )],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(hidden: Activation, loss: Loss) -> GradCheckNet {
        GradCheckNet {
            sizes: vec![3, 4, 2],
            hidden,
            loss,
            bias: true,
            batch: 3,
        }
    }

    #[test]
    fn linear_mse() {
        let err = grad_check(&spec(Activation::Linear, Loss::Mse), 1e-4, 1).unwrap();
        assert!(err <= 1e-7, "{err}");
    }

    #[test]
    fn relu_softmax() {
        let err = grad_check(&spec(Activation::Relu, Loss::CrossEntropy), 1e-6, 2).unwrap();
        assert!(err <= 1e-5, "{err}");
    }

    #[test]
    fn step_must_be_positive() {
        assert!(grad_check(&spec(Activation::Linear, Loss::Mse), 0.0, 1).is_err());
    }
}
