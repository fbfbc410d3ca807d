//! Binary checkpoint: magic, format version, a JSON header describing the
//! model and every tensor, then each tensor's value and Adam moments as
//! little-endian f64.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::io::create;
use crate::diffcore::{AdamState, Matrix, ParamStore, ParamTensor};
use crate::error::{CdmError, Result};
use crate::models::{Dims, Model, ModelConfig, ModelKind};

const MAGIC: &[u8; 8] = b"CDMCKPT\0";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    kind: ModelKind,
    config: ModelConfig,
    dims: Dims,
    tensors: Vec<TensorHeader>,
}

#[derive(Serialize, Deserialize)]
struct TensorHeader {
    name: String,
    rows: usize,
    cols: usize,
    constrained: bool,
    step: u64,
}

pub fn save_checkpoint(model: &Model, path: &Path) -> Result<()> {
    let header = Header {
        kind: model.kind(),
        config: model.config().clone(),
        dims: model.dims(),
        tensors: model
            .params()
            .iter()
            .map(|(_, t)| TensorHeader {
                name: t.name.clone(),
                rows: t.value.rows(),
                cols: t.value.cols(),
                constrained: t.constrained,
                step: t.adam.step,
            })
            .collect(),
    };
    let json = serde_json::to_vec(&header).map_err(|e| CdmError::Validation(e.to_string()))?;
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(json.len() as u64).to_le_bytes());
    buf.extend_from_slice(&json);
    for (_, t) in model.params().iter() {
        for m in [&t.value, &t.adam.m, &t.adam.v] {
            for x in m.data() {
                buf.extend_from_slice(&x.to_le_bytes());
            }
        }
    }
    let mut w = create(path)?;
    w.write_all(&buf).map_err(|e| CdmError::io(path, e))?;
    w.flush().map_err(|e| CdmError::io(path, e))
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.at.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.at..end];
                self.at = end;
                Ok(s)
            }
            None => Err(CdmError::CorruptCheckpoint(format!("truncated while reading {what}"))),
        }
    }

    fn matrix(&mut self, rows: usize, cols: usize, what: &str) -> Result<Matrix> {
        let len = rows
            .checked_mul(cols)
            .and_then(|n| n.checked_mul(8))
            .ok_or_else(|| CdmError::CorruptCheckpoint(format!("{what}: impossible shape {rows}x{cols}")))?;
        let raw = self.take(len, what)?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        Matrix::from_vec(rows, cols, data)
    }
}

/// Loads a checkpoint of any model kind.
pub fn load_checkpoint(path: &Path) -> Result<Model> {
    let bytes = fs::read(path).map_err(|e| CdmError::io(path, e))?;
    let mut r = Reader { bytes: &bytes, at: 0 };
    if r.take(MAGIC.len(), "magic")? != MAGIC {
        return Err(CdmError::CorruptCheckpoint("not a checkpoint file".into()));
    }
    let version = u32::from_le_bytes(r.take(4, "version")?.try_into().expect("4 bytes"));
    if version != CHECKPOINT_VERSION {
        return Err(CdmError::CheckpointVersion {
            found: version,
            expected: CHECKPOINT_VERSION,
        });
    }
    let json_len = u64::from_le_bytes(r.take(8, "header length")?.try_into().expect("8 bytes"));
    let json_len = usize::try_from(json_len).map_err(|_| CdmError::CorruptCheckpoint("header too large".into()))?;
    let header: Header = serde_json::from_slice(r.take(json_len, "header")?)
        .map_err(|e| CdmError::CorruptCheckpoint(format!("header: {e}")))?;
    let mut store = ParamStore::new();
    for t in &header.tensors {
        let value = r.matrix(t.rows, t.cols, &t.name)?;
        let m = r.matrix(t.rows, t.cols, &t.name)?;
        let v = r.matrix(t.rows, t.cols, &t.name)?;
        if !(value.all_finite() && m.all_finite() && v.all_finite()) {
            return Err(CdmError::CorruptCheckpoint(format!("{}: non-finite entries", t.name)));
        }
        store.push(ParamTensor {
            name: t.name.clone(),
            value,
            constrained: t.constrained,
            adam: AdamState { m, v, step: t.step },
        });
    }
    if r.at != bytes.len() {
        return Err(CdmError::CorruptCheckpoint(format!(
            "{} trailing bytes",
            bytes.len() - r.at
        )));
    }
    Model::from_parts(header.kind, header.config, header.dims, store)
}

/// Loads a checkpoint and checks that it holds a model of kind `expected`.
pub fn load_checkpoint_as(path: &Path, expected: ModelKind) -> Result<Model> {
    let model = load_checkpoint(path)?;
    if model.kind() != expected {
        return Err(CdmError::KindMismatch {
            found: model.kind().to_string(),
            expected: expected.to_string(),
        });
    }
    Ok(model)
}
