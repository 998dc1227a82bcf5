//! Model container shared by both model families.
//!
//! Layout: the 8-byte magic `ROACKPT1`, a little-endian `u64` header
//! length, a JSON header (metadata plus a tensor table), then every tensor
//! as little-endian `f64` values in table order.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::activation::ActivationKind;
use crate::error::ModelError;
use crate::fnn::RoaFnnModel;
use crate::linalg::{DenseMatrix, DenseVector};
use crate::rnn::{Readout, RnnParams, RoaRnnModel};

pub const MAGIC: &[u8; 8] = b"ROACKPT1";

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a checkpoint (bad magic)")]
    Magic,
    #[error("truncated checkpoint")]
    Truncated,
    #[error("bad header: {0}")]
    Header(#[from] serde_json::Error),
    #[error("tensor '{0}' missing or misshapen")]
    Tensor(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

type Result<T> = std::result::Result<T, CheckpointError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

impl TensorEntry {
    fn len(&self) -> usize {
        self.shape.iter().product()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum ModelMeta {
    Roafnn { alpha: f64, rho: f64, activation: ActivationKind, layer_dims: Vec<usize> },
    Roarnn { alpha: f64, rho: f64, activation: ActivationKind, readout: Readout },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub meta: ModelMeta,
    pub tensors: Vec<TensorEntry>,
    /// Free-form run information (task, step, seed, ...).
    #[serde(default)]
    pub extra: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Checkpoint {
    Fnn(RoaFnnModel),
    Rnn(RoaRnnModel),
}

fn mat(name: String, m: &DenseMatrix, t: &mut Vec<TensorEntry>, data: &mut Vec<f64>) {
    t.push(TensorEntry { name, shape: vec![m.rows(), m.cols()] });
    data.extend_from_slice(m.as_slice());
}

fn vector(name: String, v: &DenseVector, t: &mut Vec<TensorEntry>, data: &mut Vec<f64>) {
    t.push(TensorEntry { name, shape: vec![v.len()] });
    data.extend_from_slice(v.as_slice());
}

impl Checkpoint {
    fn flatten(&self) -> (ModelMeta, Vec<TensorEntry>, Vec<f64>) {
        let mut t = Vec::new();
        let mut d = Vec::new();
        let meta = match self {
            Checkpoint::Fnn(m) => {
                for l in 0..m.depth() {
                    mat(format!("w{l}"), &m.weights()[l], &mut t, &mut d);
                    vector(format!("b{l}"), &m.biases()[l], &mut t, &mut d);
                    mat(format!("o{l}"), &m.filters()[l], &mut t, &mut d);
                }
                ModelMeta::Roafnn {
                    alpha: m.alpha(),
                    rho: m.rho(),
                    activation: m.activation(),
                    layer_dims: m.layer_dims().to_vec(),
                }
            }
            Checkpoint::Rnn(m) => {
                mat("w_h".into(), m.w_h(), &mut t, &mut d);
                vector("b_h".into(), m.b_h(), &mut t, &mut d);
                mat("w_i".into(), m.w_i(), &mut t, &mut d);
                mat("w_o".into(), m.w_o(), &mut t, &mut d);
                vector("b_o".into(), m.b_o(), &mut t, &mut d);
                mat("o".into(), m.filter(), &mut t, &mut d);
                ModelMeta::Roarnn { alpha: m.alpha(), rho: m.rho(), activation: m.activation(), readout: m.readout() }
            }
        };
        (meta, t, d)
    }

    pub fn to_bytes(&self, extra: serde_json::Value) -> Vec<u8> {
        let (meta, tensors, data) = self.flatten();
        let header = serde_json::to_vec(&Header { meta, tensors, extra }).expect("header serializes");
        let mut out = Vec::with_capacity(16 + header.len() + 8 * data.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        for v in data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<(Self, Header)> {
        let header = read_header(bytes)?;
        let start = 16 + header_len(bytes)?;
        let payload = &bytes[start..];
        let total: usize = header.tensors.iter().map(TensorEntry::len).sum();
        if payload.len() != 8 * total {
            return Err(CheckpointError::Truncated);
        }
        let values: Vec<f64> =
            payload.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk"))).collect();
        let mut store = Store { header: &header, values: &values };
        let model = match &header.meta {
            ModelMeta::Roafnn { alpha, rho, activation, layer_dims } => {
                let depth = layer_dims.len().saturating_sub(1);
                let mut w = Vec::with_capacity(depth);
                let mut b = Vec::with_capacity(depth);
                let mut o = Vec::with_capacity(depth);
                for l in 0..depth {
                    w.push(store.matrix(&format!("w{l}"))?);
                    b.push(store.vector(&format!("b{l}"))?);
                    o.push(Arc::new(store.matrix(&format!("o{l}"))?));
                }
                let mut m = RoaFnnModel::from_parts(w, b, o, *alpha, *activation)?;
                if (m.rho() - rho).abs() > 1e-12 * rho.abs().max(1.0) {
                    return Err(CheckpointError::Tensor("rho inconsistent with alpha and depth".into()));
                }
                m.set_alpha(*alpha)?;
                Checkpoint::Fnn(m)
            }
            ModelMeta::Roarnn { alpha, rho, activation, readout } => {
                let p = RnnParams {
                    w_h: store.matrix("w_h")?,
                    b_h: store.vector("b_h")?,
                    w_i: store.matrix("w_i")?,
                    w_o: store.matrix("w_o")?,
                    b_o: store.vector("b_o")?,
                };
                let o = Arc::new(store.matrix("o")?);
                let mut m = RoaRnnModel::from_parts(p, o, *alpha, *activation, *readout)?;
                let horizon = if *alpha > 0.0 { (rho / alpha).round() as usize } else { 1 };
                m.set_alpha(*alpha, horizon)?;
                Checkpoint::Rnn(m)
            }
        };
        Ok((model, header))
    }

    pub fn save(&self, path: &Path, extra: serde_json::Value) -> Result<()> {
        std::fs::write(path, self.to_bytes(extra))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<(Self, Header)> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

fn header_len(bytes: &[u8]) -> Result<usize> {
    if bytes.len() < 16 {
        return Err(if bytes.starts_with(MAGIC) { CheckpointError::Truncated } else { CheckpointError::Magic });
    }
    if &bytes[..8] != MAGIC {
        return Err(CheckpointError::Magic);
    }
    let n = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    if bytes.len() < 16 + n {
        return Err(CheckpointError::Truncated);
    }
    Ok(n)
}

/// Parses only the header.
pub fn read_header(bytes: &[u8]) -> Result<Header> {
    let n = header_len(bytes)?;
    Ok(serde_json::from_slice(&bytes[16..16 + n])?)
}

struct Store<'a> {
    header: &'a Header,
    values: &'a [f64],
}

impl Store<'_> {
    fn find(&mut self, name: &str, rank: usize) -> Result<(Vec<usize>, Vec<f64>)> {
        let mut offset = 0;
        for t in &self.header.tensors {
            if t.name == name {
                if t.shape.len() != rank {
                    break;
                }
                return Ok((t.shape.clone(), self.values[offset..offset + t.len()].to_vec()));
            }
            offset += t.len();
        }
        Err(CheckpointError::Tensor(name.to_string()))
    }

    fn matrix(&mut self, name: &str) -> Result<DenseMatrix> {
        let (shape, data) = self.find(name, 2)?;
        DenseMatrix::from_vec(shape[0], shape[1], data).map_err(|_| CheckpointError::Tensor(name.to_string()))
    }

    fn vector(&mut self, name: &str) -> Result<DenseVector> {
        Ok(DenseVector(self.find(name, 1)?.1))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fnn::{FnnConfig, Mixing};
    use crate::rnn::RnnConfig;

    #[test]
    fn fnn_round_trip() {
        let cfg = FnnConfig::new(vec![2, 3, 3, 1], ActivationKind::Tanh, Mixing::Rho(1.5));
        let m = RoaFnnModel::init(&cfg, 4).unwrap();
        let bytes = Checkpoint::Fnn(m.clone()).to_bytes(serde_json::json!({"step": 7}));
        let (back, header) = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back, Checkpoint::Fnn(m));
        assert_eq!(header.extra["step"], 7);
        assert_eq!(header.tensors.len(), 9);
    }

    #[test]
    fn rnn_round_trip_via_file() {
        let m = RoaRnnModel::init(&RnnConfig::new(5, 2, 3, Mixing::Rho(3.0), 60), 1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        Checkpoint::Rnn(m.clone()).save(&path, serde_json::Value::Null).unwrap();
        let (back, _) = Checkpoint::load(&path).unwrap();
        assert_eq!(back, Checkpoint::Rnn(m));
    }

    #[test]
    fn rejects_corruption() {
        let m = RoaRnnModel::init(&RnnConfig::new(3, 1, 1, Mixing::Alpha(0.5), 2), 0).unwrap();
        let bytes = Checkpoint::Rnn(m).to_bytes(serde_json::Value::Null);
        assert!(matches!(Checkpoint::from_bytes(&bytes[..bytes.len() - 1]), Err(CheckpointError::Truncated)));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(Checkpoint::from_bytes(&bad), Err(CheckpointError::Magic)));
        assert!(matches!(Checkpoint::from_bytes(&bytes[..10]), Err(CheckpointError::Truncated)));
    }
}
