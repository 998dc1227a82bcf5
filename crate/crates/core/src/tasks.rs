//! Synthetic benchmark generators: double moon, copying memory and the
//! adding problem. All generators are pure functions of their config.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ModelError, Result};
use crate::linalg::DenseMatrix;
use crate::rng::seeded;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DoubleMoonConfig {
    pub n_points: usize,
    pub radius: f64,
    pub width: f64,
    /// Vertical gap between the moons; negative values interlock them.
    pub separation: f64,
    /// Horizontal shift of the second moon.
    pub offset: f64,
    pub seed: u64,
}

impl Default for DoubleMoonConfig {
    fn default() -> Self {
        Self { n_points: 1000, radius: 10.0, width: 6.0, separation: -2.0, offset: 10.0, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DoubleMoon {
    pub points: Vec<[f64; 2]>,
    /// −1 for the upper moon, +1 for the lower one.
    pub labels: Vec<f64>,
}

impl DoubleMoon {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Inputs (`2 × k`) and targets (`1 × k`) for the given sample indices.
    pub fn batch(&self, idx: &[usize]) -> (DenseMatrix, DenseMatrix) {
        let x = DenseMatrix::from_fn(2, idx.len(), |i, j| self.points[idx[j]][i]);
        let y = DenseMatrix::from_fn(1, idx.len(), |_, j| self.labels[idx[j]]);
        (x, y)
    }

    pub fn all(&self) -> (DenseMatrix, DenseMatrix) {
        self.batch(&(0..self.len()).collect::<Vec<_>>())
    }
}

/// Two interleaved half annuli, `n/2` points in the first (label −1) and
/// the rest in the second (label +1), uniform over each annulus section.
pub fn gen_double_moon(cfg: &DoubleMoonConfig) -> Result<DoubleMoon> {
    if cfg.n_points < 2 {
        return Err(ModelError::Config("double moon needs at least 2 points".into()));
    }
    if !(cfg.width > 0.0 && cfg.width < 2.0 * cfg.radius) {
        return Err(ModelError::Config("moon width must lie in (0, 2·radius)".into()));
    }
    let mut rng = seeded(cfg.seed);
    let r_in = cfg.radius - cfg.width / 2.0;
    let r_out = cfg.radius + cfg.width / 2.0;
    let upper = cfg.n_points / 2;
    let mut points = Vec::with_capacity(cfg.n_points);
    let mut labels = Vec::with_capacity(cfg.n_points);
    for k in 0..cfg.n_points {
        let r = rng.random_range(r_in * r_in..r_out * r_out).sqrt();
        let theta = rng.random_range(0.0..PI);
        if k < upper {
            points.push([r * theta.cos(), r * theta.sin()]);
            labels.push(-1.0);
        } else {
            points.push([r * theta.cos() + cfg.offset, -r * theta.sin() - cfg.separation]);
            labels.push(1.0);
        }
    }
    Ok(DoubleMoon { points, labels })
}

pub const COPY_ALPHABET: usize = 8;
pub const COPY_BLANK: usize = 0;
pub const COPY_START: usize = 9;
/// Input categories: blank, 8 symbols, start marker.
pub const COPY_INPUT_DIM: usize = 10;
/// Output classes: blank and 8 symbols.
pub const COPY_CLASSES: usize = 9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CopyMemConfig {
    pub symbols: usize,
    pub lag: usize,
    pub batch: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CopyBatch {
    /// Character codes per step, `codes[k][b]`.
    pub input_codes: Vec<Vec<usize>>,
    /// One-hot inputs per step (`10 × B`).
    pub inputs: Vec<DenseMatrix>,
    /// Target class per step and sample.
    pub targets: Vec<Vec<usize>>,
}

impl CopyBatch {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }
}

/// `S` symbols, `L` blanks, the start marker, `S − 1` blanks; the target is
/// `L + S` blanks followed by the symbols in order.
pub fn gen_copy_batch(cfg: &CopyMemConfig) -> Result<CopyBatch> {
    if cfg.lag == 0 || cfg.symbols == 0 || cfg.batch == 0 {
        return Err(ModelError::Config("copying memory needs positive S, L and batch".into()));
    }
    let (s, l, b) = (cfg.symbols, cfg.lag, cfg.batch);
    let len = l + 2 * s;
    let mut rng = seeded(cfg.seed);
    let mut input_codes = vec![vec![COPY_BLANK; b]; len];
    let mut targets = vec![vec![COPY_BLANK; b]; len];
    for j in 0..b {
        for k in 0..s {
            let sym = rng.random_range(1..=COPY_ALPHABET);
            input_codes[k][j] = sym;
            targets[l + s + k][j] = sym;
        }
        input_codes[l + s][j] = COPY_START;
    }
    let inputs = input_codes
        .iter()
        .map(|codes| DenseMatrix::from_fn(COPY_INPUT_DIM, b, |i, j| if codes[j] == i { 1.0 } else { 0.0 }))
        .collect();
    Ok(CopyBatch { input_codes, inputs, targets })
}

/// Cross-entropy of predicting blanks and then uniform symbols.
pub fn copy_baseline(symbols: usize, lag: usize) -> f64 {
    symbols as f64 * (COPY_ALPHABET as f64).ln() / (lag + 2 * symbols) as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AddProbConfig {
    pub length: usize,
    pub batch: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AddBatch {
    /// `(a_k, b_k)` per step (`2 × B`).
    pub inputs: Vec<DenseMatrix>,
    /// `a_{i1} + a_{i2}` per sample (`1 × B`).
    pub targets: DenseMatrix,
    /// 1-based marker positions per sample.
    pub markers: Vec<(usize, usize)>,
}

pub fn gen_add_batch(cfg: &AddProbConfig) -> Result<AddBatch> {
    let t = cfg.length;
    if t < 2 {
        return Err(ModelError::Config(format!("adding problem needs T ≥ 2, got {t}")));
    }
    if cfg.batch == 0 {
        return Err(ModelError::Config("adding problem needs a positive batch".into()));
    }
    let b = cfg.batch;
    let half = t / 2;
    let mut rng = seeded(cfg.seed);
    let mut inputs = vec![DenseMatrix::zeros(2, b); t];
    let mut targets = DenseMatrix::zeros(1, b);
    let mut markers = Vec::with_capacity(b);
    for j in 0..b {
        for u in inputs.iter_mut() {
            u.as_mut_slice()[j] = rng.random_range(0.0..=1.0);
        }
        let i1 = rng.random_range(1..=half);
        let i2 = rng.random_range(half + 1..=t);
        inputs[i1 - 1].as_mut_slice()[b + j] = 1.0;
        inputs[i2 - 1].as_mut_slice()[b + j] = 1.0;
        targets.as_mut_slice()[j] = inputs[i1 - 1][(0, j)] + inputs[i2 - 1][(0, j)];
        markers.push((i1, i2));
    }
    Ok(AddBatch { inputs, targets, markers })
}

/// MSE of always predicting 1: the variance of a sum of two U[0, 1].
pub fn add_baseline() -> f64 {
    1.0 / 6.0
}
