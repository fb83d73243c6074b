//! MNIST IDX loading, balanced subsets, and synthetic Gaussian blobs.

use std::fs::File;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;
use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::Example;
use crate::error::{invalid, Error, Result};
use crate::scalar::Real;

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Error)]
pub enum IdxError {
    #[error("bad magic in {path}: expected {expected:#010x}, found {found:#010x}")]
    BadMagic {
        path: PathBuf,
        expected: u32,
        found: u32,
    },
    #[error("{images} images but {labels} labels")]
    LengthMismatch { images: usize, labels: usize },
    #[error("truncated payload in {path}: expected {expected} bytes, found {found}")]
    Truncated {
        path: PathBuf,
        expected: usize,
        found: usize,
    },
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    Mnist,
    Synthetic,
}

/// Pixel bytes (scaled to `[0, 1]` on use) or real-valued features.
#[derive(Clone, Debug, PartialEq)]
pub enum Features {
    Bytes(Vec<u8>),
    Real(Vec<f64>),
}

/// Row-major features with one label per row.
#[derive(Clone, Debug)]
pub struct RawDataset {
    pub features: Features,
    pub labels: Vec<usize>,
    pub dim: usize,
    pub num_classes: usize,
    pub source: DataSource,
    /// Image shape for IDX data.
    pub rows: usize,
    pub cols: usize,
}

impl RawDataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Feature vector of item `i`; bytes are divided by 255.
    pub fn feature_vector<T: Real>(&self, i: usize) -> Vec<T> {
        let range = i * self.dim..(i + 1) * self.dim;
        match &self.features {
            Features::Bytes(b) => b[range].iter().map(|&v| T::lit(v as f64 / 255.0)).collect(),
            Features::Real(x) => x[range].iter().map(|&v| T::lit(v)).collect(),
        }
    }

    /// Raw pixel bytes of item `i`, if the dataset stores bytes.
    pub fn image(&self, i: usize) -> Option<&[u8]> {
        match &self.features {
            Features::Bytes(b) => Some(&b[i * self.dim..(i + 1) * self.dim]),
            Features::Real(_) => None,
        }
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// Every item as an [`Example`], ids in file order.
    pub fn to_examples<T: Real>(&self) -> Vec<Example<T>> {
        (0..self.len())
            .map(|i| Example::new(i, self.feature_vector::<T>(i), self.labels[i]))
            .collect()
    }

    /// Uniform subsample of `n` items without replacement (all items if `n`
    /// is at least the dataset size), in increasing index order.
    pub fn subsample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> RawDataset {
        if n >= self.len() {
            return self.clone();
        }
        let mut picked = index::sample(rng, self.len(), n).into_vec();
        picked.sort_unstable();
        self.select(&picked)
    }

    fn select(&self, rows: &[usize]) -> RawDataset {
        let d = self.dim;
        let features = match &self.features {
            Features::Bytes(b) => Features::Bytes(rows.iter().flat_map(|&i| b[i * d..(i + 1) * d].iter().copied()).collect()),
            Features::Real(x) => Features::Real(rows.iter().flat_map(|&i| x[i * d..(i + 1) * d].iter().copied()).collect()),
        };
        RawDataset {
            features,
            labels: rows.iter().map(|&i| self.labels[i]).collect(),
            ..self.clone_header()
        }
    }

    fn clone_header(&self) -> RawDataset {
        RawDataset {
            features: Features::Real(Vec::new()),
            labels: Vec::new(),
            dim: self.dim,
            num_classes: self.num_classes,
            source: self.source,
            rows: self.rows,
            cols: self.cols,
        }
    }
}

// ---------------------------------------------------------------------------
// IDX
// ---------------------------------------------------------------------------

fn read_file(path: &Path) -> Result<Vec<u8>, IdxError> {
    let io_err = |source| IdxError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut raw = Vec::new();
    File::open(path).and_then(|mut f| f.read_to_end(&mut raw)).map_err(io_err)?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice()).read_to_end(&mut out).map_err(io_err)?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

fn be_u32(bytes: &[u8], at: usize, path: &Path) -> Result<u32, IdxError> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| IdxError::Truncated {
            path: path.to_path_buf(),
            expected: at + 4,
            found: bytes.len(),
        })
}

fn check_magic(bytes: &[u8], expected: u32, path: &Path) -> Result<(), IdxError> {
    let found = be_u32(bytes, 0, path)?;
    if found != expected {
        return Err(IdxError::BadMagic {
            path: path.to_path_buf(),
            expected,
            found,
        });
    }
    Ok(())
}

fn payload<'a>(bytes: &'a [u8], header: usize, len: usize, path: &Path) -> Result<&'a [u8], IdxError> {
    bytes.get(header..header + len).ok_or_else(|| IdxError::Truncated {
        path: path.to_path_buf(),
        expected: header + len,
        found: bytes.len(),
    })
}

/// Reads an image file: `(count, rows, cols, pixels)`.
pub fn read_idx_images(path: &Path) -> Result<(usize, usize, usize, Vec<u8>), IdxError> {
    let bytes = read_file(path)?;
    check_magic(&bytes, IMAGE_MAGIC, path)?;
    let n = be_u32(&bytes, 4, path)? as usize;
    let rows = be_u32(&bytes, 8, path)? as usize;
    let cols = be_u32(&bytes, 12, path)? as usize;
    let pixels = payload(&bytes, 16, n * rows * cols, path)?.to_vec();
    Ok((n, rows, cols, pixels))
}

pub fn read_idx_labels(path: &Path) -> Result<Vec<u8>, IdxError> {
    let bytes = read_file(path)?;
    check_magic(&bytes, LABEL_MAGIC, path)?;
    let n = be_u32(&bytes, 4, path)? as usize;
    Ok(payload(&bytes, 8, n, path)?.to_vec())
}

/// Loads an image/label pair of IDX files (optionally gzip-compressed).
pub fn load_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<RawDataset> {
    let (n, rows, cols, pixels) = read_idx_images(images_path.as_ref())?;
    let labels = read_idx_labels(labels_path.as_ref())?;
    if labels.len() != n {
        return Err(IdxError::LengthMismatch {
            images: n,
            labels: labels.len(),
        }
        .into());
    }
    let labels: Vec<usize> = labels.into_iter().map(usize::from).collect();
    let num_classes = labels.iter().max().map_or(0, |&m| m + 1);
    Ok(RawDataset {
        features: Features::Bytes(pixels),
        labels,
        dim: rows * cols,
        num_classes,
        source: DataSource::Mnist,
        rows,
        cols,
    })
}

fn write_bytes(path: &Path, bytes: &[u8], gzip: bool) -> Result<()> {
    let io_err = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = File::create(path).map_err(io_err)?;
    if gzip {
        let mut enc = GzEncoder::new(file, Compression::default());
        enc.write_all(bytes).map_err(io_err)?;
        enc.finish().map_err(io_err)?;
    } else {
        let mut file = file;
        file.write_all(bytes).map_err(io_err)?;
    }
    Ok(())
}

pub fn write_idx_images(path: impl AsRef<Path>, rows: usize, cols: usize, pixels: &[u8], gzip: bool) -> Result<()> {
    let size = rows * cols;
    if size == 0 || !pixels.len().is_multiple_of(size) {
        return Err(invalid("pixels", "length is not a multiple of rows·cols"));
    }
    let mut bytes = Vec::with_capacity(16 + pixels.len());
    for v in [IMAGE_MAGIC, (pixels.len() / size) as u32, rows as u32, cols as u32] {
        bytes.extend_from_slice(&v.to_be_bytes());
    }
    bytes.extend_from_slice(pixels);
    write_bytes(path.as_ref(), &bytes, gzip)
}

pub fn write_idx_labels(path: impl AsRef<Path>, labels: &[u8], gzip: bool) -> Result<()> {
    let mut bytes = Vec::with_capacity(8 + labels.len());
    bytes.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
    bytes.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    bytes.extend_from_slice(labels);
    write_bytes(path.as_ref(), &bytes, gzip)
}

// ---------------------------------------------------------------------------
// Subsets and synthetic data
// ---------------------------------------------------------------------------

/// `K` items per class, drawn uniformly without replacement. Examples are
/// returned class by class with ids `0..K·L`.
pub fn balanced_subset<T: Real, R: Rng + ?Sized>(raw: &RawDataset, k: usize, rng: &mut R) -> Result<Vec<Example<T>>> {
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); raw.num_classes];
    for (i, &l) in raw.labels.iter().enumerate() {
        by_class[l].push(i);
    }
    if let Some((l, members)) = by_class.iter().enumerate().find(|(_, m)| m.len() < k) {
        return Err(Error::Dataset(format!(
            "class {l} has {} items, need {k}",
            members.len()
        )));
    }
    let mut out = Vec::with_capacity(k * raw.num_classes);
    for (l, members) in by_class.iter().enumerate() {
        for pos in index::sample(rng, members.len(), k) {
            let features: Arc<[T]> = raw.feature_vector::<T>(members[pos]).into();
            out.push(Example::new(out.len(), features, l));
        }
    }
    Ok(out)
}

/// Class `ℓ` is an isotropic unit Gaussian centred at `separation · e_ℓ`.
pub fn synthetic_blobs<R: Rng + ?Sized>(
    num_classes: usize,
    per_class: usize,
    dim: usize,
    separation: f64,
    rng: &mut R,
) -> Result<RawDataset> {
    if dim < num_classes {
        return Err(invalid("dim", format!("D = {dim} < L = {num_classes}")));
    }
    let mut features = Vec::with_capacity(num_classes * per_class * dim);
    let mut labels = Vec::with_capacity(num_classes * per_class);
    for l in 0..num_classes {
        for _ in 0..per_class {
            for k in 0..dim {
                let noise: f64 = StandardNormal.sample(rng);
                features.push(noise + if k == l { separation } else { 0.0 });
            }
            labels.push(l);
        }
    }
    Ok(RawDataset {
        features: Features::Real(features),
        labels,
        dim,
        num_classes,
        source: DataSource::Synthetic,
        rows: 1,
        cols: dim,
    })
}
