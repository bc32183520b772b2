//! 2-D convolution as a matrix product.
//!
//! `im2col` lays every receptive field out as a column of a patch matrix
//! `P` of shape `(c·kh·kw) × (n·out_h·out_w)`, so a convolution is just
//! `W P`, and any gradient transform written for dense layers applies to
//! `P` unchanged. Patch rows are ordered (channel, ky, kx); columns are
//! batch-major, then row-major over output positions. `col2im` is the exact
//! scatter-add adjoint of that layout.
//!
//! With the consequentialism transform the Gram system is
//! `(n·out_h·out_w)²`, which grows quickly with image size.

use crate::error::{Error, Result};
use crate::linalg::{gemm, Matrix};
use crate::nn::{init_matrix, GradientTransform, InitScheme};

/// Batch of images stored NCHW.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageBatch {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ImageDims {
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl ImageDims {
    pub fn len(&self) -> usize {
        self.c * self.h * self.w
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl ImageBatch {
    pub fn new(n: usize, c: usize, h: usize, w: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * c * h * w {
            return Err(Error::ShapeMismatch(format!(
                "{} values for a {n}x{c}x{h}x{w} image batch",
                data.len()
            )));
        }
        Ok(ImageBatch { n, c, h, w, data })
    }

    pub fn zeros(n: usize, dims: ImageDims) -> Self {
        ImageBatch {
            n,
            c: dims.c,
            h: dims.h,
            w: dims.w,
            data: vec![0.0; n * dims.len()],
        }
    }

    pub fn dims(&self) -> ImageDims {
        ImageDims {
            c: self.c,
            h: self.h,
            w: self.w,
        }
    }

    #[inline]
    pub fn at(&self, b: usize, ch: usize, y: usize, x: usize) -> f64 {
        self.data[((b * self.c + ch) * self.h + y) * self.w + x]
    }

    /// One sample per column, each flattened CHW.
    pub fn from_columns(features: &Matrix, dims: ImageDims) -> Result<Self> {
        if features.rows() != dims.len() {
            return Err(Error::DimensionMismatch {
                op: "image from columns",
                lhs: (dims.len(), features.cols()),
                rhs: features.shape(),
            });
        }
        let n = features.cols();
        let t = features.transpose();
        ImageBatch::new(n, dims.c, dims.h, dims.w, t.into_vec())
    }

    pub fn to_columns(&self) -> Matrix {
        let per = self.c * self.h * self.w;
        Matrix::from_vec(self.n, per, self.data.clone())
            .expect("ImageBatch length invariant")
            .transpose()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvSpec {
    pub out_channels: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub stride: usize,
    pub pad: usize,
}

impl ConvSpec {
    pub fn output_dims(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        if self.stride == 0 {
            return Err(Error::InvalidSpec("stride must be at least 1".into()));
        }
        if self.kernel_h == 0 || self.kernel_w == 0 || self.out_channels == 0 {
            return Err(Error::InvalidSpec(
                "kernel size and output channels must be positive".into(),
            ));
        }
        let (ph, pw) = (h + 2 * self.pad, w + 2 * self.pad);
        if ph < self.kernel_h || pw < self.kernel_w {
            return Err(Error::InvalidSpec(format!(
                "{}x{} kernel does not fit a {h}x{w} input with padding {}",
                self.kernel_h, self.kernel_w, self.pad
            )));
        }
        Ok((
            (ph - self.kernel_h) / self.stride + 1,
            (pw - self.kernel_w) / self.stride + 1,
        ))
    }

    pub fn patch_len(&self, channels: usize) -> usize {
        channels * self.kernel_h * self.kernel_w
    }

    /// Input pixel under kernel tap (ky, kx) at output position (oy, ox),
    /// or `None` when it falls in the zero padding.
    #[inline]
    fn source(&self, oy: usize, ox: usize, ky: usize, kx: usize, h: usize, w: usize) -> Option<(usize, usize)> {
        let y = (oy * self.stride + ky).checked_sub(self.pad)?;
        let x = (ox * self.stride + kx).checked_sub(self.pad)?;
        (y < h && x < w).then_some((y, x))
    }
}

pub fn im2col(img: &ImageBatch, spec: &ConvSpec) -> Result<Matrix> {
    let (oh, ow) = spec.output_dims(img.h, img.w)?;
    let rows = spec.patch_len(img.c);
    let cols = img.n * oh * ow;
    let mut p = Matrix::zeros(rows, cols);
    for ch in 0..img.c {
        for ky in 0..spec.kernel_h {
            for kx in 0..spec.kernel_w {
                let r = (ch * spec.kernel_h + ky) * spec.kernel_w + kx;
                for b in 0..img.n {
                    for oy in 0..oh {
                        for ox in 0..ow {
                            if let Some((y, x)) = spec.source(oy, ox, ky, kx, img.h, img.w) {
                                p[(r, (b * oh + oy) * ow + ox)] = img.at(b, ch, y, x);
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(p)
}

/// Scatter-add adjoint of [`im2col`] for a batch of `n` images of `dims`.
pub fn col2im(cols: &Matrix, n: usize, dims: ImageDims, spec: &ConvSpec) -> Result<ImageBatch> {
    let (oh, ow) = spec.output_dims(dims.h, dims.w)?;
    if cols.shape() != (spec.patch_len(dims.c), n * oh * ow) {
        return Err(Error::InvalidSpec(format!(
            "patch matrix {:?} does not match {}x{}x{}x{} with this kernel",
            cols.shape(),
            n,
            dims.c,
            dims.h,
            dims.w
        )));
    }
    let mut img = ImageBatch::zeros(n, dims);
    for ch in 0..dims.c {
        for ky in 0..spec.kernel_h {
            for kx in 0..spec.kernel_w {
                let r = (ch * spec.kernel_h + ky) * spec.kernel_w + kx;
                for b in 0..n {
                    for oy in 0..oh {
                        for ox in 0..ow {
                            if let Some((y, x)) = spec.source(oy, ox, ky, kx, dims.h, dims.w) {
                                img.data[((b * dims.c + ch) * dims.h + y) * dims.w + x] +=
                                    cols[(r, (b * oh + oy) * ow + ox)];
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(img)
}

/// `out_channels × (n·oh·ow)` product layout → NCHW.
fn product_to_images(z: &Matrix, n: usize, oh: usize, ow: usize) -> ImageBatch {
    let oc = z.rows();
    let hw = oh * ow;
    let mut data = vec![0.0; n * oc * hw];
    for o in 0..oc {
        let row = z.row(o);
        for b in 0..n {
            data[(b * oc + o) * hw..(b * oc + o + 1) * hw].copy_from_slice(&row[b * hw..(b + 1) * hw]);
        }
    }
    ImageBatch {
        n,
        c: oc,
        h: oh,
        w: ow,
        data,
    }
}

/// NCHW → `channels × (n·h·w)` product layout.
fn images_to_product(img: &ImageBatch) -> Matrix {
    let hw = img.h * img.w;
    let mut z = Matrix::zeros(img.c, img.n * hw);
    for o in 0..img.c {
        for b in 0..img.n {
            let src = &img.data[(b * img.c + o) * hw..(b * img.c + o + 1) * hw];
            z.data_mut()[o * img.n * hw + b * hw..o * img.n * hw + (b + 1) * hw].copy_from_slice(src);
        }
    }
    z
}

fn check_weights(img: &ImageBatch, weights: &Matrix, spec: &ConvSpec) -> Result<()> {
    if weights.shape() != (spec.out_channels, spec.patch_len(img.c)) {
        return Err(Error::DimensionMismatch {
            op: "conv weights",
            lhs: (spec.out_channels, spec.patch_len(img.c)),
            rhs: weights.shape(),
        });
    }
    Ok(())
}

pub fn conv_forward(img: &ImageBatch, weights: &Matrix, spec: &ConvSpec) -> Result<ImageBatch> {
    check_weights(img, weights, spec)?;
    let (oh, ow) = spec.output_dims(img.h, img.w)?;
    let z = gemm(weights, &im2col(img, spec)?, false, false)?;
    Ok(product_to_images(&z, img.n, oh, ow))
}

/// Weight change and input gradient for a convolution given ∂L/∂(output).
///
/// `dw = −μ · transform.direction(ΔZ, P)` with `P = im2col(img)`;
/// `dx = col2im(Wᵀ ΔZ)`.
pub fn conv_backward(
    img: &ImageBatch,
    weights: &Matrix,
    spec: &ConvSpec,
    dz_out: &ImageBatch,
    mu: f64,
    transform: &dyn GradientTransform,
) -> Result<(Matrix, ImageBatch)> {
    check_weights(img, weights, spec)?;
    let (oh, ow) = spec.output_dims(img.h, img.w)?;
    if (dz_out.n, dz_out.c, dz_out.h, dz_out.w) != (img.n, spec.out_channels, oh, ow) {
        return Err(Error::ShapeMismatch(format!(
            "output gradient is {}x{}x{}x{}, expected {}x{}x{oh}x{ow}",
            dz_out.n, dz_out.c, dz_out.h, dz_out.w, img.n, spec.out_channels
        )));
    }
    let patches = im2col(img, spec)?;
    let dz = images_to_product(dz_out);
    let dw = transform.direction(&dz, &patches)?.scale(-mu);
    let dcols = gemm(weights, &dz, true, false)?;
    let dx = col2im(&dcols, img.n, img.dims(), spec)?;
    Ok((dw, dx))
}

/// A ReLU convolution used as the front end of a dense network. Inputs and
/// outputs are feature matrices with one flattened CHW sample per column.
#[derive(Debug, Clone)]
pub struct ConvLayer {
    pub spec: ConvSpec,
    pub input: ImageDims,
    pub weights: Matrix,
    pub lr_multiplier: f64,
}

#[derive(Debug, Clone)]
pub struct ConvCache {
    pub patches: Matrix,
    /// Pre-activation in product layout, `out_channels × (n·oh·ow)`.
    pub z: Matrix,
    /// ReLU output as features, `(out_channels·oh·ow) × n`.
    pub output: Matrix,
}

impl ConvLayer {
    pub fn new(input: ImageDims, spec: ConvSpec) -> Result<Self> {
        spec.output_dims(input.h, input.w)?;
        Ok(ConvLayer {
            spec,
            input,
            weights: Matrix::zeros(spec.out_channels, spec.patch_len(input.c)),
            lr_multiplier: 1.0,
        })
    }

    pub fn output_dims(&self) -> ImageDims {
        let (h, w) = self
            .spec
            .output_dims(self.input.h, self.input.w)
            .expect("validated in ConvLayer::new");
        ImageDims {
            c: self.spec.out_channels,
            h,
            w,
        }
    }

    pub fn init(&mut self, scheme: InitScheme, seed: u64) {
        let fan_in = self.weights.cols();
        let fan_out = self.spec.out_channels * self.spec.kernel_h * self.spec.kernel_w;
        init_matrix(&mut self.weights, fan_in, fan_out, scheme, seed);
    }

    pub fn forward(&self, features: &Matrix) -> Result<ConvCache> {
        let img = ImageBatch::from_columns(features, self.input)?;
        let patches = im2col(&img, &self.spec)?;
        let z = gemm(&self.weights, &patches, false, false)?;
        let out = self.output_dims();
        let act = product_to_images(&z.map(|v| v.max(0.0)), img.n, out.h, out.w);
        Ok(ConvCache {
            patches,
            z,
            output: act.to_columns(),
        })
    }

    /// μ-free weight direction given ∂L/∂(output features).
    pub fn direction(&self, cache: &ConvCache, d_output: &Matrix, transform: &dyn GradientTransform) -> Result<Matrix> {
        let out = self.output_dims();
        let dimg = ImageBatch::from_columns(d_output, out)?;
        let dz = images_to_product(&dimg).hadamard(&cache.z.map(|v| if v > 0.0 { 1.0 } else { 0.0 }))?;
        transform.direction(&dz, &cache.patches)
    }
}
