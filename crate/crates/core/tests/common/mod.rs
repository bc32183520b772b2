//! Reference implementations used as oracles. They share no code with the
//! library beyond reading weights and shapes.

#![allow(dead_code)]

use std::path::PathBuf;

use conseq::conv::{ConvSpec, ImageBatch};
use conseq::nn::{Activation, Layer, Loss, Network};
use conseq::Matrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

/// A random network of at most three layers and eight units per layer.
pub struct RandomNet {
    pub net: Network,
    pub loss: Loss,
    pub x: Matrix,
    pub t: Matrix,
}

pub fn random_net(rng: &mut ChaCha8Rng) -> RandomNet {
    let depth = rng.random_range(1..=3);
    let loss = if rng.random_bool(0.5) { Loss::Mse } else { Loss::CrossEntropy };
    let hidden = if rng.random_bool(0.5) { Activation::Relu } else { Activation::Linear };
    let mut sizes: Vec<usize> = (0..depth).map(|_| rng.random_range(1..=8)).collect();
    sizes.push(match loss {
        Loss::CrossEntropy => rng.random_range(2..=8),
        Loss::Mse => rng.random_range(1..=8),
    });
    let output = match loss {
        Loss::CrossEntropy => Activation::Softmax,
        Loss::Mse => Activation::Linear,
    };
    let layers = (0..depth)
        .map(|l| {
            let bias = rng.random_bool(0.5);
            let act = if l + 1 == depth { output } else { hidden };
            let cols = sizes[l] + usize::from(bias);
            let mut layer = Layer::from_weights(normal(sizes[l + 1], cols, rng).scale(0.7), act);
            layer.bias = bias;
            layer
        })
        .collect();
    let net = Network::new(layers).expect("valid chain");
    let n = rng.random_range(1..=6);
    let t = match loss {
        Loss::Mse => normal(sizes[depth], n, rng),
        Loss::CrossEntropy => {
            let mut t = Matrix::zeros(sizes[depth], n);
            for j in 0..n {
                t[(rng.random_range(0..sizes[depth]), j)] = 1.0;
            }
            t
        }
    };
    let mut x = normal(sizes[0], n, rng);
    while min_relu_input(&net, &x) <= 1e-3 {
        x = normal(sizes[0], n, rng);
    }
    RandomNet { net, loss, x, t }
}

fn column(m: &Matrix, j: usize) -> Vec<f64> {
    (0..m.rows()).map(|i| m[(i, j)]).collect()
}

/// Per-sample forward pass returning every pre-activation vector.
fn forward_sample(net: &Network, mut a: Vec<f64>) -> Vec<Vec<f64>> {
    let mut zs = Vec::new();
    for layer in net.layers() {
        if layer.bias {
            a.push(1.0);
        }
        let w = &layer.weights;
        let z: Vec<f64> = (0..w.rows())
            .map(|i| (0..w.cols()).map(|k| w[(i, k)] * a[k]).sum())
            .collect();
        a = match layer.activation {
            Activation::Relu => z.iter().map(|v| v.max(0.0)).collect(),
            _ => z.clone(),
        };
        zs.push(z);
    }
    zs
}

/// Smallest |z| feeding a ReLU anywhere in the network (∞ if none).
pub fn min_relu_input(net: &Network, x: &Matrix) -> f64 {
    let mut m = f64::INFINITY;
    for j in 0..x.cols() {
        for (layer, z) in net.layers().iter().zip(forward_sample(net, column(x, j))) {
            if layer.activation == Activation::Relu {
                m = z.iter().fold(m, |m, v| m.min(v.abs()));
            }
        }
    }
    m
}

/// Per-sample loss: ½‖y − t‖², or cross-entropy of softmax(z).
pub fn oracle_losses(net: &Network, x: &Matrix, t: &Matrix, loss: Loss) -> Vec<f64> {
    (0..x.cols()).map(|j| {
        let zs = forward_sample(net, column(x, j));
        let z = &zs[zs.len() - 1];
        let tj = column(t, j);
        match loss {
            Loss::Mse => z.iter().zip(&tj).map(|(y, t)| 0.5 * (y - t).powi(2)).sum::<f64>(),
            Loss::CrossEntropy => {
                let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let lse = m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
                z.iter().zip(&tj).map(|(z, t)| t * (lse - z)).sum::<f64>()
            }
        }
    })
    .collect()
}

pub fn oracle_loss(net: &Network, x: &Matrix, t: &Matrix, loss: Loss) -> f64 {
    oracle_losses(net, x, t, loss).iter().sum()
}

/// Central-difference gradient of the oracle loss for every weight. Samples
/// are differenced before summing to limit cancellation.
pub fn fd_gradients(net: &Network, x: &Matrix, t: &Matrix, loss: Loss, h: f64) -> Vec<Matrix> {
    let mut probe = net.clone();
    let mut grads = Vec::new();
    for l in 0..net.depth() {
        let w = &net.layers()[l].weights;
        let mut g = Matrix::zeros(w.rows(), w.cols());
        for k in 0..w.data().len() {
            let orig = w.data()[k];
            probe.layers_mut()[l].weights.data_mut()[k] = orig + h;
            let up = oracle_losses(&probe, x, t, loss);
            probe.layers_mut()[l].weights.data_mut()[k] = orig - h;
            let down = oracle_losses(&probe, x, t, loss);
            probe.layers_mut()[l].weights.data_mut()[k] = orig;
            g.data_mut()[k] = up.iter().zip(&down).map(|(u, d)| u - d).sum::<f64>() / (2.0 * h);
        }
        grads.push(g);
    }
    grads
}

/// Gradients below this magnitude are compared absolutely.
pub const GRAD_FLOOR: f64 = 1e-4;

pub fn max_rel_err(a: &Matrix, b: &Matrix) -> f64 {
    a.data()
        .iter()
        .zip(b.data())
        .map(|(a, b)| (a - b).abs() / a.abs().max(b.abs()).max(GRAD_FLOOR))
        .fold(0.0, f64::max)
}

/// Inverse by Gauss-Jordan elimination with partial pivoting.
pub fn gauss_jordan_inverse(a: &Matrix) -> Matrix {
    let n = a.rows();
    let mut m: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut row: Vec<f64> = (0..n).map(|j| a[(i, j)]).collect();
            row.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            row
        })
        .collect();
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| m[i][c].abs().total_cmp(&m[j][c].abs())).unwrap();
        m.swap(c, p);
        let pivot = m[c][c];
        assert!(pivot != 0.0, "singular");
        for v in m[c].iter_mut() {
            *v /= pivot;
        }
        for r in 0..n {
            if r != c {
                let f = m[r][c];
                let src = m[c].clone();
                for (v, s) in m[r].iter_mut().zip(src) {
                    *v -= f * s;
                }
            }
        }
    }
    Matrix::from_fn(n, n, |i, j| m[i][n + j])
}

pub fn naive_matmul(a: &Matrix, b: &Matrix) -> Matrix {
    assert_eq!(a.cols(), b.rows());
    Matrix::from_fn(a.rows(), b.cols(), |i, j| (0..a.cols()).map(|k| a[(i, k)] * b[(k, j)]).sum())
}

pub fn naive_transpose(a: &Matrix) -> Matrix {
    Matrix::from_fn(a.cols(), a.rows(), |i, j| a[(j, i)])
}

/// Moore-Penrose pseudoinverse from an SVD.
pub fn svd_pinv(x: &Matrix) -> Matrix {
    let m = nalgebra::DMatrix::from_row_slice(x.rows(), x.cols(), x.data());
    let p = m.pseudo_inverse(1e-12).expect("svd converges");
    Matrix::from_fn(p.nrows(), p.ncols(), |i, j| p[(i, j)])
}

/// Direct convolution with zero padding, one output at a time.
pub fn direct_conv(img: &ImageBatch, weights: &Matrix, spec: &ConvSpec) -> ImageBatch {
    let oh = (img.h + 2 * spec.pad - spec.kernel_h) / spec.stride + 1;
    let ow = (img.w + 2 * spec.pad - spec.kernel_w) / spec.stride + 1;
    let mut out = Vec::with_capacity(img.n * spec.out_channels * oh * ow);
    for b in 0..img.n {
        for o in 0..spec.out_channels {
            for y in 0..oh {
                for x in 0..ow {
                    let mut acc = 0.0;
                    for c in 0..img.c {
                        for ky in 0..spec.kernel_h {
                            for kx in 0..spec.kernel_w {
                                let iy = (y * spec.stride + ky) as isize - spec.pad as isize;
                                let ix = (x * spec.stride + kx) as isize - spec.pad as isize;
                                if iy < 0 || ix < 0 || iy >= img.h as isize || ix >= img.w as isize {
                                    continue;
                                }
                                let k = (c * spec.kernel_h + ky) * spec.kernel_w + kx;
                                acc += weights[(o, k)] * img.at(b, c, iy as usize, ix as usize);
                            }
                        }
                    }
                    out.push(acc);
                }
            }
        }
    }
    ImageBatch::new(img.n, spec.out_channels, oh, ow, out).expect("sized")
}

pub fn random_image(n: usize, c: usize, h: usize, w: usize, rng: &mut ChaCha8Rng) -> ImageBatch {
    let data = (0..n * c * h * w).map(|_| StandardNormal.sample(rng)).collect();
    ImageBatch::new(n, c, h, w, data).expect("sized")
}

pub fn image_dot(a: &ImageBatch, b: &ImageBatch) -> f64 {
    a.data.iter().zip(&b.data).map(|(x, y)| x * y).sum()
}
