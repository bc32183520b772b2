mod common;

use common::*;
use conseq::conv::{conv_backward, conv_forward, im2col, ConvSpec, ImageBatch};
use conseq::data::{load_idx, IDX_IMAGES_MAGIC};
use conseq::linalg::{cholesky_solve, gemm, ridge_right_pinv_apply};
use conseq::nn::{backward_bp, GradientTransform, Plain};
use conseq::{Matrix, Result};
use std::sync::atomic::{AtomicUsize, Ordering};

fn spd(n: usize, seed: u64) -> Matrix {
    let b = normal(n, n, &mut rng(seed));
    naive_matmul(&naive_transpose(&b), &b).add(&Matrix::identity(n).scale(0.5)).unwrap()
}

#[test]
fn cholesky_matches_gauss_jordan() {
    for n in 1..=8 {
        for seed in 0..5 {
            let a = spd(n, seed * 10 + n as u64);
            let b = normal(n, 3, &mut rng(seed));
            let got = cholesky_solve(&a, &b).unwrap();
            let want = naive_matmul(&gauss_jordan_inverse(&a), &b);
            assert!(got.max_abs_diff(&want) <= 1e-9, "n={n} seed={seed}");
        }
    }
}

#[test]
fn ridge_free_pinv_matches_svd() {
    for (d, n) in [(5, 3), (20, 10), (8, 8), (50, 4)] {
        let mut r = rng(d as u64 * 100 + n as u64);
        let x = normal(d, n, &mut r);
        let g = normal(3, n, &mut r);
        let got = ridge_right_pinv_apply(&g, &x, 0.0).unwrap();
        let want = naive_matmul(&g, &svd_pinv(&x));
        assert!(got.max_abs_diff(&want) <= 1e-9 * want.max_abs().max(1.0), "{d}x{n}");
    }
}

#[test]
fn ridge_matches_explicit_inverse() {
    let mut r = rng(7);
    let x = normal(6, 9, &mut r);
    let g = normal(2, 9, &mut r);
    for lambda in [1e-3, 0.1, 1.0, 30.0] {
        let gram = naive_matmul(&naive_transpose(&x), &x).add(&Matrix::identity(9).scale(lambda)).unwrap();
        let want = naive_matmul(&naive_matmul(&g, &gauss_jordan_inverse(&gram)), &naive_transpose(&x));
        let got = ridge_right_pinv_apply(&g, &x, lambda).unwrap();
        assert!(got.max_abs_diff(&want) <= 1e-9, "lambda {lambda}");
    }
}

#[test]
fn backprop_matches_finite_differences() {
    let mut r = rng(11);
    for _ in 0..50 {
        let net = random_net(&mut r);
        let cache = net.net.forward(&net.x, &net.t, net.loss).unwrap();
        let bp = backward_bp(&net.net, &cache, 0.5).unwrap();
        let fd = fd_gradients(&net.net, &net.x, &net.t, net.loss, 1e-6);
        for (dw, g) in bp.dw.iter().zip(&fd) {
            let err = max_rel_err(&dw.scale(-1.0 / 0.5), g);
            assert!(err <= 1e-5, "{err}");
        }
        let loss = oracle_loss(&net.net, &net.x, &net.t, net.loss);
        assert!((cache.loss - loss).abs() <= 1e-12 * loss.abs().max(1.0));
    }
}

#[test]
fn conv_forward_matches_direct_loops() {
    let mut r = rng(13);
    for kh in 1..=3 {
        for kw in 1..=3 {
            for stride in 1..=2 {
                for pad in 0..=1 {
                    let spec = ConvSpec { out_channels: 2, kernel_h: kh, kernel_w: kw, stride, pad };
                    let img = random_image(2, 3, 5, 5, &mut r);
                    let w = normal(2, spec.patch_len(3), &mut r);
                    let got = conv_forward(&img, &w, &spec).unwrap();
                    let want = direct_conv(&img, &w, &spec);
                    assert_eq!((got.n, got.c, got.h, got.w), (want.n, want.c, want.h, want.w));
                    for (a, b) in got.data.iter().zip(&want.data) {
                        assert!((a - b).abs() <= 1e-10);
                    }
                }
            }
        }
    }
}

fn conv_loss(img: &ImageBatch, w: &Matrix, spec: &ConvSpec, target: &ImageBatch) -> f64 {
    let out = direct_conv(img, w, spec);
    out.data.iter().zip(&target.data).map(|(y, t)| 0.5 * (y - t).powi(2)).sum()
}

#[test]
fn conv_backward_matches_finite_differences() {
    let mut r = rng(17);
    let spec = ConvSpec { out_channels: 2, kernel_h: 3, kernel_w: 2, stride: 2, pad: 1 };
    let img = random_image(2, 2, 5, 4, &mut r);
    let w = normal(2, spec.patch_len(2), &mut r);
    let out = conv_forward(&img, &w, &spec).unwrap();
    let target = random_image(out.n, out.c, out.h, out.w, &mut r);
    let dz_data = out.data.iter().zip(&target.data).map(|(y, t)| y - t).collect();
    let dz = ImageBatch::new(out.n, out.c, out.h, out.w, dz_data).unwrap();
    let mu = 0.25;
    let (dw, dx) = conv_backward(&img, &w, &spec, &dz, mu, &Plain).unwrap();
    let h = 1e-6;

    let mut probe = w.clone();
    for k in 0..w.data().len() {
        probe.data_mut()[k] = w.data()[k] + h;
        let up = conv_loss(&img, &probe, &spec, &target);
        probe.data_mut()[k] = w.data()[k] - h;
        let down = conv_loss(&img, &probe, &spec, &target);
        probe.data_mut()[k] = w.data()[k];
        let fd = (up - down) / (2.0 * h);
        let a = -dw.data()[k] / mu;
        assert!((a - fd).abs() / a.abs().max(fd.abs()).max(GRAD_FLOOR) <= 1e-5, "weight {k}");
    }

    let mut probe = img.clone();
    for k in 0..img.data.len() {
        probe.data[k] = img.data[k] + h;
        let up = conv_loss(&probe, &w, &spec, &target);
        probe.data[k] = img.data[k] - h;
        let down = conv_loss(&probe, &w, &spec, &target);
        probe.data[k] = img.data[k];
        let fd = (up - down) / (2.0 * h);
        let a = dx.data[k];
        assert!((a - fd).abs() / a.abs().max(fd.abs()).max(GRAD_FLOOR) <= 1e-5, "pixel {k}");
    }
}

/// Plain directions, recording the size of the batch it was handed.
struct Recording(AtomicUsize);

impl GradientTransform for Recording {
    fn name(&self) -> &str {
        "recording"
    }

    fn direction(&self, dz: &Matrix, x: &Matrix) -> Result<Matrix> {
        self.0.store(x.cols(), Ordering::SeqCst);
        Plain.direction(dz, x)
    }

    fn interference(&self, x: &Matrix) -> Result<Matrix> {
        Plain.interference(x)
    }
}

#[test]
fn conv_gram_spans_every_output_position() {
    let mut r = rng(19);
    let spec = ConvSpec { out_channels: 4, kernel_h: 3, kernel_w: 3, stride: 1, pad: 1 };
    let img = random_image(3, 2, 6, 5, &mut r);
    let dz = random_image(3, 4, 6, 5, &mut r);
    let w = normal(4, spec.patch_len(2), &mut r);
    let rec = Recording(AtomicUsize::new(0));
    conv_backward(&img, &w, &spec, &dz, 1.0, &rec).unwrap();
    // One Gram row and column per (sample, output position).
    assert_eq!(rec.0.load(Ordering::SeqCst), 3 * 6 * 5);
    let p = im2col(&img, &spec).unwrap();
    assert_eq!(gemm(&p, &p, true, false).unwrap().shape(), (90, 90));
}

#[test]
fn fixture_parses_byte_exact() {
    let images = std::fs::read(fixture("fashion-1000-images-idx3-ubyte")).unwrap();
    let labels = std::fs::read(fixture("fashion-1000-labels-idx1-ubyte")).unwrap();
    assert_eq!(u32::from_be_bytes(images[..4].try_into().unwrap()), IDX_IMAGES_MAGIC);
    let ds = load_idx(
        &fixture("fashion-1000-images-idx3-ubyte"),
        &fixture("fashion-1000-labels-idx1-ubyte"),
    )
    .unwrap();
    assert_eq!(ds.features.shape(), (784, 1000));
    assert_eq!(ds.num_classes, 10);
    for j in [0, 1, 517, 999] {
        for i in 0..784 {
            assert_eq!(ds.features[(i, j)], f64::from(images[16 + j * 784 + i]));
        }
        assert_eq!(ds.labels[j], usize::from(labels[8 + j]));
    }
    let mut counts = [0; 10];
    for &l in &ds.labels {
        counts[l] += 1;
    }
    assert_eq!(counts, [100; 10]);
}
