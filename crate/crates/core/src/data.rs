//! Dataset loading and batching.
//!
//! Loaders keep raw pixel bytes as `f64` values in `0..=255`; scaling is a
//! separate [`normalize`] step. Features are stored one sample per column.

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};

use crate::conv::ImageDims;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::rng;

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;
pub const CIFAR10_RECORD_LEN: usize = 1 + 3072;
const CIFAR10_CLASSES: usize = 10;

/// Standard deviations below this are treated as this value when standardizing.
pub const STD_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// D × M, one sample per column.
    pub features: Matrix,
    pub labels: Vec<usize>,
    pub num_classes: usize,
    /// Present for image datasets (CHW layout of each feature column).
    pub image_dims: Option<ImageDims>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.rows()
    }

    /// The first `m` samples.
    pub fn take(&self, m: usize) -> Dataset {
        let m = m.min(self.len());
        let idx: Vec<usize> = (0..m).collect();
        Dataset {
            features: self.features.select_columns(&idx),
            labels: self.labels[..m].to_vec(),
            num_classes: self.num_classes,
            image_dims: self.image_dims,
        }
    }

    pub fn targets(&self) -> Matrix {
        one_hot(&self.labels, self.num_classes)
    }
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn be_u32(bytes: &[u8], at: usize, path: &Path) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::TruncatedFile {
            path: path.to_path_buf(),
            detail: format!("header ends before byte {}", at + 4),
        })
}

fn expect_len(bytes: &[u8], expected: usize, path: &Path) -> Result<()> {
    if bytes.len() != expected {
        return Err(Error::TruncatedFile {
            path: path.to_path_buf(),
            detail: format!("expected {expected} bytes, found {}", bytes.len()),
        });
    }
    Ok(())
}

/// Parses an IDX image file (magic 0x803) into (rows, cols, D×M pixels).
pub fn parse_idx_images(bytes: &[u8], path: &Path) -> Result<(usize, usize, Matrix)> {
    let magic = be_u32(bytes, 0, path)?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::BadMagic {
            path: path.to_path_buf(),
            found: magic,
            expected: IDX_IMAGES_MAGIC,
        });
    }
    let n = be_u32(bytes, 4, path)? as usize;
    let rows = be_u32(bytes, 8, path)? as usize;
    let cols = be_u32(bytes, 12, path)? as usize;
    let d = rows * cols;
    expect_len(bytes, 16 + n * d, path)?;
    let pixels = &bytes[16..];
    let features = Matrix::from_fn(d, n, |i, j| f64::from(pixels[j * d + i]));
    Ok((rows, cols, features))
}

/// Parses an IDX label file (magic 0x801).
pub fn parse_idx_labels(bytes: &[u8], path: &Path) -> Result<Vec<u8>> {
    let magic = be_u32(bytes, 0, path)?;
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::BadMagic {
            path: path.to_path_buf(),
            found: magic,
            expected: IDX_LABELS_MAGIC,
        });
    }
    let n = be_u32(bytes, 4, path)? as usize;
    expect_len(bytes, 8 + n, path)?;
    Ok(bytes[8..].to_vec())
}

pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<Dataset> {
    let (rows, cols, features) = parse_idx_images(&read(images_path)?, images_path)?;
    let labels = parse_idx_labels(&read(labels_path)?, labels_path)?;
    if labels.len() != features.cols() {
        return Err(Error::CountMismatch {
            images: features.cols(),
            labels: labels.len(),
        });
    }
    let labels: Vec<usize> = labels.into_iter().map(usize::from).collect();
    let num_classes = labels.iter().max().map_or(0, |m| m + 1);
    Ok(Dataset {
        features,
        labels,
        num_classes,
        image_dims: Some(ImageDims { c: 1, h: rows, w: cols }),
    })
}

/// Parses one CIFAR-10 binary batch: records of 1 label byte + 3072 CHW pixels.
pub fn parse_cifar10(bytes: &[u8], path: &Path) -> Result<(Vec<usize>, Vec<u8>)> {
    if !bytes.len().is_multiple_of(CIFAR10_RECORD_LEN) {
        return Err(Error::TruncatedFile {
            path: path.to_path_buf(),
            detail: format!(
                "{} bytes is not a multiple of the {CIFAR10_RECORD_LEN}-byte record",
                bytes.len()
            ),
        });
    }
    let mut labels = Vec::with_capacity(bytes.len() / CIFAR10_RECORD_LEN);
    let mut pixels = Vec::with_capacity(bytes.len());
    for (record, chunk) in bytes.chunks_exact(CIFAR10_RECORD_LEN).enumerate() {
        let label = chunk[0];
        if usize::from(label) >= CIFAR10_CLASSES {
            return Err(Error::BadLabel {
                path: path.to_path_buf(),
                record,
                label,
            });
        }
        labels.push(usize::from(label));
        pixels.extend_from_slice(&chunk[1..]);
    }
    Ok((labels, pixels))
}

/// Batch files in `dir`: `data_batch_*.bin` if any exist, otherwise every
/// `*.bin`, in name order.
fn cifar_batch_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut bins: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "bin"))
        .collect();
    bins.sort();
    let train: Vec<PathBuf> = bins
        .iter()
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("data_batch"))
        })
        .cloned()
        .collect();
    Ok(if train.is_empty() { bins } else { train })
}

/// Loads and concatenates the CIFAR-10 batches in `dir` (or a single file).
pub fn load_cifar10(path: &Path) -> Result<Dataset> {
    let files = if path.is_dir() {
        cifar_batch_files(path)?
    } else {
        vec![path.to_path_buf()]
    };
    if files.is_empty() {
        return Err(Error::io(
            path,
            std::io::Error::new(std::io::ErrorKind::NotFound, "no .bin batch files"),
        ));
    }
    let mut labels = Vec::new();
    let mut pixels = Vec::new();
    for f in &files {
        let (l, p) = parse_cifar10(&read(f)?, f)?;
        labels.extend(l);
        pixels.extend(p);
    }
    let d = CIFAR10_RECORD_LEN - 1;
    let features = Matrix::from_fn(d, labels.len(), |i, j| f64::from(pixels[j * d + i]));
    Ok(Dataset {
        features,
        labels,
        num_classes: CIFAR10_CLASSES,
        image_dims: Some(ImageDims { c: 3, h: 32, w: 32 }),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormalizeMode {
    /// Bytes / 255, in [0, 1].
    UnitRange,
    /// Bytes / 255 − 0.5, in [−0.5, 0.5].
    CenteredHalf,
    /// Each feature row shifted and scaled to mean 0, std 1.
    StandardizeFeatures,
}

impl NormalizeMode {
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "unit_range" => Ok(NormalizeMode::UnitRange),
            "centered_half" => Ok(NormalizeMode::CenteredHalf),
            "standardize_features" => Ok(NormalizeMode::StandardizeFeatures),
            other => Err(Error::UnknownName {
                kind: "normalization",
                name: other.to_string(),
                available: "unit_range, centered_half, standardize_features".into(),
            }),
        }
    }
}

/// Per-feature statistics fitted on a training split, reusable on others.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn fit(features: &Matrix) -> Self {
        let m = features.cols() as f64;
        let mut mean = Vec::with_capacity(features.rows());
        let mut std = Vec::with_capacity(features.rows());
        for i in 0..features.rows() {
            let row = features.row(i);
            let mu = row.iter().sum::<f64>() / m;
            let var = row.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / m;
            mean.push(mu);
            std.push(var.sqrt().max(STD_FLOOR));
        }
        Standardizer { mean, std }
    }

    pub fn apply(&self, features: &Matrix) -> Matrix {
        Matrix::from_fn(features.rows(), features.cols(), |i, j| {
            (features[(i, j)] - self.mean[i]) / self.std[i]
        })
    }
}

pub fn normalize(ds: &Dataset, mode: NormalizeMode) -> Dataset {
    let features = match mode {
        NormalizeMode::UnitRange => ds.features.map(|v| v / 255.0),
        NormalizeMode::CenteredHalf => ds.features.map(|v| v / 255.0 - 0.5),
        NormalizeMode::StandardizeFeatures => Standardizer::fit(&ds.features).apply(&ds.features),
    };
    Dataset {
        features,
        ..ds.clone()
    }
}

pub fn one_hot(labels: &[usize], num_classes: usize) -> Matrix {
    let mut t = Matrix::zeros(num_classes, labels.len());
    for (j, &l) in labels.iter().enumerate() {
        t[(l, j)] = 1.0;
    }
    t
}

/// Sample order for one epoch: a full shuffle determined by `(seed, epoch)`.
pub fn epoch_order(m: usize, seed: u64, epoch: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..m).collect();
    order.shuffle(&mut rng::shuffle_stream(seed, epoch));
    order
}

/// Mini-batches of one epoch. The final short batch is dropped.
pub struct BatchIter<'a> {
    ds: &'a Dataset,
    order: Vec<usize>,
    batch_size: usize,
    next: usize,
}

impl Iterator for BatchIter<'_> {
    type Item = (Matrix, Matrix);

    fn next(&mut self) -> Option<Self::Item> {
        let end = self.next + self.batch_size;
        if end > self.order.len() {
            return None;
        }
        let idx = &self.order[self.next..end];
        self.next = end;
        let x = self.ds.features.select_columns(idx);
        let labels: Vec<usize> = idx.iter().map(|&i| self.ds.labels[i]).collect();
        Some((x, one_hot(&labels, self.ds.num_classes)))
    }
}

impl ExactSizeIterator for BatchIter<'_> {
    fn len(&self) -> usize {
        (self.order.len() - self.next) / self.batch_size
    }
}

pub fn batch_iter(ds: &Dataset, batch_size: usize, seed: u64, epoch: u64) -> BatchIter<'_> {
    assert!(batch_size >= 1, "batch size must be positive");
    BatchIter {
        ds,
        order: epoch_order(ds.len(), seed, epoch),
        batch_size,
        next: 0,
    }
}

/// Standard-normal inputs (d_in × n) and targets (d_out × n).
pub fn synthetic_gaussian(d_in: usize, d_out: usize, n: usize, seed: u64) -> (Matrix, Matrix) {
    let mut rng = rng::stream(seed, rng::STREAM_DATA);
    let mut draw = |r, c| {
        let data = (0..r * c).map(|_| StandardNormal.sample(&mut rng)).collect();
        Matrix::from_vec(r, c, data).expect("sized above")
    };
    let x = draw(d_in, n);
    let t = draw(d_out, n);
    (x, t)
}
