//! MNIST in the IDX format, served as pixel sequences.
//!
//! Images are flattened row by row, scaled by 1/255 and reordered by a
//! fixed permutation before being fed one pixel per step.

use std::fs::File;
use std::io::{BufReader, Read};
use std::path::{Path, PathBuf};

use flate2::read::GzDecoder;
use rand::seq::SliceRandom;
use thiserror::Error;

use crate::linalg::DenseMatrix;
use crate::rng::seeded;

pub const PIXELS: usize = 784;
pub const CLASSES: usize = 10;
pub const IMAGE_MAGIC: u32 = 2051;
pub const LABEL_MAGIC: u32 = 2049;
/// Seed of the permutation shipped in `data/permutation.txt`.
pub const SHIPPED_PERMUTATION_SEED: u64 = 92_916;

const SHIPPED_PERMUTATION: &str = include_str!("../data/permutation.txt");

#[derive(Debug, Error)]
pub enum MnistError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: bad magic number {found}, expected {expected} ({kind} IDX file)")]
    Magic { path: PathBuf, found: u32, expected: u32, kind: &'static str },
    #[error("{path}: {reason}")]
    Corrupt { path: PathBuf, reason: String },
    #[error("no MNIST files in {dir}: expected {name}[.gz]")]
    Missing { dir: PathBuf, name: &'static str },
    #[error("invalid permutation: {0}")]
    Permutation(String),
}

type Result<T> = std::result::Result<T, MnistError>;

#[derive(Debug, Clone, PartialEq)]
pub struct MnistSplit {
    /// Row-major 28×28 images, 784 bytes each.
    pub pixels: Vec<u8>,
    pub labels: Vec<u8>,
}

impl MnistSplit {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn image(&self, i: usize) -> &[u8] {
        &self.pixels[i * PIXELS..(i + 1) * PIXELS]
    }

    /// Keeps the samples at `idx`, in that order.
    pub fn select(&self, idx: &[usize]) -> Self {
        let mut pixels = Vec::with_capacity(idx.len() * PIXELS);
        for &i in idx {
            pixels.extend_from_slice(self.image(i));
        }
        Self { pixels, labels: idx.iter().map(|&i| self.labels[i]).collect() }
    }

    /// A seeded random subset holding `fraction` of the samples.
    pub fn subset(&self, fraction: f64, seed: u64) -> Self {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.shuffle(&mut seeded(seed));
        let keep = ((self.len() as f64 * fraction.clamp(0.0, 1.0)).round() as usize).min(self.len());
        idx.truncate(keep);
        idx.sort_unstable();
        self.select(&idx)
    }

    /// Pixel sequences for the samples at `idx`: step `k` holds the pixel
    /// `perm[k]` of every image as a `1 × B` row.
    pub fn sequence_batch(&self, idx: &[usize], perm: &Permutation) -> (Vec<DenseMatrix>, Vec<usize>) {
        let b = idx.len();
        let steps = perm
            .0
            .iter()
            .map(|&p| {
                DenseMatrix::from_vec(
                    1,
                    b,
                    idx.iter().map(|&i| f64::from(self.pixels[i * PIXELS + p]) / 255.0).collect(),
                )
                .expect("row shape")
            })
            .collect();
        (steps, idx.iter().map(|&i| usize::from(self.labels[i])).collect())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mnist {
    pub train: MnistSplit,
    pub test: MnistSplit,
}

/// Pixel order `perm[k]` = source pixel read at step `k`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Permutation(pub Vec<usize>);

impl Permutation {
    pub fn identity() -> Self {
        Self((0..PIXELS).collect())
    }

    pub fn seeded(seed: u64) -> Self {
        let mut p: Vec<usize> = (0..PIXELS).collect();
        p.shuffle(&mut seeded(seed));
        Self(p)
    }

    /// The fixed permutation distributed with the crate.
    pub fn shipped() -> Self {
        Self::parse(SHIPPED_PERMUTATION).expect("shipped permutation is valid")
    }

    pub fn new(p: Vec<usize>) -> Result<Self> {
        if p.len() != PIXELS {
            return Err(MnistError::Permutation(format!("expected {PIXELS} entries, got {}", p.len())));
        }
        let mut seen = vec![false; PIXELS];
        for &i in &p {
            if i >= PIXELS || std::mem::replace(&mut seen[i], true) {
                return Err(MnistError::Permutation(format!("entry {i} repeated or out of range")));
            }
        }
        Ok(Self(p))
    }

    /// Newline-separated integers.
    pub fn parse(text: &str) -> Result<Self> {
        let p = text
            .split_whitespace()
            .map(|t| t.parse::<usize>().map_err(|e| MnistError::Permutation(format!("'{t}': {e}"))))
            .collect::<Result<Vec<_>>>()?;
        Self::new(p)
    }

    pub fn to_text(&self) -> String {
        self.0.iter().map(|i| format!("{i}\n")).collect()
    }

    pub fn inverse(&self) -> Self {
        let mut inv = vec![0; self.0.len()];
        for (k, &p) in self.0.iter().enumerate() {
            inv[p] = k;
        }
        Self(inv)
    }

    pub fn apply<T: Copy>(&self, seq: &[T]) -> Vec<T> {
        self.0.iter().map(|&p| seq[p]).collect()
    }
}

fn open(path: &Path) -> Result<Vec<u8>> {
    let io = |source| MnistError::Io { path: path.to_path_buf(), source };
    let mut raw = Vec::new();
    BufReader::new(File::open(path).map_err(io)?).read_to_end(&mut raw).map_err(io)?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(&raw[..]).read_to_end(&mut out).map_err(io)?;
        return Ok(out);
    }
    Ok(raw)
}

fn be_u32(bytes: &[u8], at: usize, path: &Path) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| MnistError::Corrupt { path: path.to_path_buf(), reason: "truncated header".into() })
}

pub fn parse_idx_images(bytes: &[u8], path: &Path) -> Result<Vec<u8>> {
    let magic = be_u32(bytes, 0, path)?;
    if magic != IMAGE_MAGIC {
        return Err(MnistError::Magic { path: path.to_path_buf(), found: magic, expected: IMAGE_MAGIC, kind: "image" });
    }
    let n = be_u32(bytes, 4, path)? as usize;
    let rows = be_u32(bytes, 8, path)? as usize;
    let cols = be_u32(bytes, 12, path)? as usize;
    if rows * cols != PIXELS {
        return Err(MnistError::Corrupt {
            path: path.to_path_buf(),
            reason: format!("images are {rows}×{cols}, expected 28×28"),
        });
    }
    let body = &bytes[16..];
    if body.len() != n * PIXELS {
        return Err(MnistError::Corrupt {
            path: path.to_path_buf(),
            reason: format!("{} pixel bytes for {n} images", body.len()),
        });
    }
    Ok(body.to_vec())
}

pub fn parse_idx_labels(bytes: &[u8], path: &Path) -> Result<Vec<u8>> {
    let magic = be_u32(bytes, 0, path)?;
    if magic != LABEL_MAGIC {
        return Err(MnistError::Magic { path: path.to_path_buf(), found: magic, expected: LABEL_MAGIC, kind: "label" });
    }
    let n = be_u32(bytes, 4, path)? as usize;
    let body = &bytes[8..];
    if body.len() != n || body.iter().any(|&l| usize::from(l) >= CLASSES) {
        return Err(MnistError::Corrupt { path: path.to_path_buf(), reason: "label count or range mismatch".into() });
    }
    Ok(body.to_vec())
}

fn find(dir: &Path, name: &'static str) -> Result<PathBuf> {
    [name.to_string(), format!("{name}.gz"), name.replacen("-idx", ".idx", 1)]
        .iter()
        .map(|n| dir.join(n))
        .find(|p| p.is_file())
        .ok_or_else(|| MnistError::Missing { dir: dir.to_path_buf(), name })
}

pub fn load_split(dir: &Path, images: &'static str, labels: &'static str) -> Result<MnistSplit> {
    let ip = find(dir, images)?;
    let lp = find(dir, labels)?;
    let pixels = parse_idx_images(&open(&ip)?, &ip)?;
    let labels = parse_idx_labels(&open(&lp)?, &lp)?;
    if pixels.len() != labels.len() * PIXELS {
        return Err(MnistError::Corrupt { path: lp, reason: "image and label counts differ".into() });
    }
    Ok(MnistSplit { pixels, labels })
}

/// Loads the standard four files (optionally gzipped) from `dir`.
pub fn load_mnist(dir: &Path) -> Result<Mnist> {
    Ok(Mnist {
        train: load_split(dir, "train-images-idx3-ubyte", "train-labels-idx1-ubyte")?,
        test: load_split(dir, "t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte")?,
    })
}
