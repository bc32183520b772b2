use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::Network;
use crate::linalg::Matrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitScheme {
    /// Glorot uniform on ±√(6 / (fan_in + fan_out)).
    Xavier,
    /// He normal with std √(2 / fan_in).
    Kaiming,
}

impl InitScheme {
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "xavier" => Ok(InitScheme::Xavier),
            "kaiming" => Ok(InitScheme::Kaiming),
            other => Err(Error::UnknownName {
                kind: "init scheme",
                name: other.to_string(),
                available: "xavier, kaiming".into(),
            }),
        }
    }
}

/// Re-draws every weight from `scheme`. Bias columns start at zero.
pub fn init_weights(net: &mut Network, scheme: InitScheme, seed: u64) {
    let mut rng = crate::rng::stream(seed, crate::rng::STREAM_INIT);
    for layer in net.layers_mut() {
        let (fan_in, fan_out, bias) = (layer.in_dim(), layer.out_dim(), layer.bias);
        fill(&mut layer.weights, fan_in, fan_out, bias, scheme, &mut rng);
    }
}

/// Initializes a single weight matrix with explicit fan-in and fan-out.
pub fn init_matrix(w: &mut Matrix, fan_in: usize, fan_out: usize, scheme: InitScheme, seed: u64) {
    let mut rng = crate::rng::stream(seed, crate::rng::STREAM_INIT);
    fill(w, fan_in, fan_out, false, scheme, &mut rng);
}

fn fill(w: &mut Matrix, fan_in: usize, fan_out: usize, bias: bool, scheme: InitScheme, rng: &mut ChaCha8Rng) {
    let cols = w.cols();
    let is_bias = |k: usize| bias && k % cols == cols - 1;
    match scheme {
        InitScheme::Xavier => {
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for (k, v) in w.data_mut().iter_mut().enumerate() {
                *v = if is_bias(k) { 0.0 } else { rng.random_range(-bound..bound) };
            }
        }
        InitScheme::Kaiming => {
            let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("fan_in is positive");
            for (k, v) in w.data_mut().iter_mut().enumerate() {
                *v = if is_bias(k) { 0.0 } else { normal.sample(rng) };
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Activation;

    #[test]
    fn same_seed_same_weights() {
        let mut a = Network::mlp(&[5, 4, 3], Activation::Relu, Activation::Linear, true).unwrap();
        let mut b = a.clone();
        init_weights(&mut a, InitScheme::Kaiming, 42);
        init_weights(&mut b, InitScheme::Kaiming, 42);
        for (la, lb) in a.layers().iter().zip(b.layers()) {
            assert_eq!(la.weights.data(), lb.weights.data());
        }
        init_weights(&mut b, InitScheme::Kaiming, 43);
        assert_ne!(a.layers()[0].weights.data(), b.layers()[0].weights.data());
    }

    #[test]
    fn kaiming_std_800() {
        let mut net = Network::mlp(&[800, 800], Activation::Relu, Activation::Linear, false).unwrap();
        init_weights(&mut net, InitScheme::Kaiming, 7);
        let w = net.layers()[0].weights.data();
        assert_eq!(w.len(), 640_000);
        let n = w.len() as f64;
        let mean = w.iter().sum::<f64>() / n;
        let std = (w.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        let expected = (2.0f64 / 800.0).sqrt();
        assert!((std / expected - 1.0).abs() < 0.05, "std {std} vs {expected}");
    }

    #[test]
    fn xavier_within_bounds() {
        let mut net = Network::mlp(&[30, 20, 10], Activation::Relu, Activation::Linear, false).unwrap();
        init_weights(&mut net, InitScheme::Xavier, 1);
        for layer in net.layers() {
            let bound = (6.0 / (layer.in_dim() + layer.out_dim()) as f64).sqrt();
            assert!(layer.weights.data().iter().all(|v| v.abs() <= bound));
        }
    }

    #[test]
    fn bias_column_starts_at_zero() {
        let mut net = Network::mlp(&[3, 2], Activation::Relu, Activation::Linear, true).unwrap();
        init_weights(&mut net, InitScheme::Xavier, 9);
        let w = &net.layers()[0].weights;
        assert_eq!(w.column(3), vec![0.0, 0.0]);
        assert!(w.column(0).iter().any(|v| *v != 0.0));
    }
}
