//! Flat named-tensor checkpoint container, version 1.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic   8 bytes  b"QNBCKPT1"
//! version u32      1
//! meta    u32 length + that many bytes of JSON (string-to-string map,
//!                      always containing "model")
//! count   u32      number of tensors
//! tensor* name     u16 length + bytes
//!         ndim     u8
//!         dims     ndim x u64
//!         data     prod(dims) x f64
//! ```
//!
//! Tensors are written in layout order, so files are byte-stable across runs
//! for identical parameters.

use super::{ModelKind, TensorSpec};
use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;
use thiserror::Error;

const MAGIC: &[u8; 8] = b"QNBCKPT1";
const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("bad checkpoint magic")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    BadVersion(u32),
    #[error("malformed metadata: {0}")]
    BadMeta(String),
    #[error("tensor set does not match the model layout: {0}")]
    LayoutMismatch(String),
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub model: ModelKind,
    pub meta: BTreeMap<String, String>,
    pub tensors: Vec<(String, Vec<usize>, Vec<f64>)>,
}

impl Checkpoint {
    /// Reassemble the flat parameter vector against a model's layout.
    pub fn to_params(&self, layout: &[TensorSpec]) -> Result<Vec<f64>, CheckpointError> {
        let total: usize = layout.iter().map(TensorSpec::len).sum();
        let mut params = vec![0.0; total];
        if self.tensors.len() != layout.len() {
            return Err(CheckpointError::LayoutMismatch(format!(
                "{} tensors vs {} specs",
                self.tensors.len(),
                layout.len()
            )));
        }
        for (spec, (name, shape, data)) in layout.iter().zip(&self.tensors) {
            if &spec.name != name || &spec.shape != shape {
                return Err(CheckpointError::LayoutMismatch(format!(
                    "expected {} {:?}, found {} {:?}",
                    spec.name, spec.shape, name, shape
                )));
            }
            params[spec.offset..spec.offset + spec.len()].copy_from_slice(data);
        }
        Ok(params)
    }
}

fn io_err(path: &Path, source: std::io::Error) -> CheckpointError {
    CheckpointError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Serialize parameters as named tensors.
pub fn save_checkpoint(
    path: &Path,
    model: ModelKind,
    layout: &[TensorSpec],
    params: &[f64],
    extra_meta: &BTreeMap<String, String>,
) -> Result<(), CheckpointError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| io_err(path, e))?;
    }
    let mut meta = extra_meta.clone();
    meta.insert("model".to_string(), model.name().to_string());
    let meta_json = serde_json::to_vec(&meta).expect("string map serializes");

    let mut buf: Vec<u8> = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(meta_json.len() as u32).to_le_bytes());
    buf.extend_from_slice(&meta_json);
    buf.extend_from_slice(&(layout.len() as u32).to_le_bytes());
    for spec in layout {
        buf.extend_from_slice(&(spec.name.len() as u16).to_le_bytes());
        buf.extend_from_slice(spec.name.as_bytes());
        buf.push(spec.shape.len() as u8);
        for &d in &spec.shape {
            buf.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in &params[spec.offset..spec.offset + spec.len()] {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let mut f = std::fs::File::create(path).map_err(|e| io_err(path, e))?;
    f.write_all(&buf).map_err(|e| io_err(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, CheckpointError> {
    let mut f = std::fs::File::open(path).map_err(|e| io_err(path, e))?;
    let mut bytes = Vec::new();
    f.read_to_end(&mut bytes).map_err(|e| io_err(path, e))?;
    let mut at = 0usize;
    let take = |at: &mut usize, n: usize| -> Result<&[u8], CheckpointError> {
        if *at + n > bytes.len() {
            return Err(CheckpointError::BadMeta("truncated".into()));
        }
        let s = &bytes[*at..*at + n];
        *at += n;
        Ok(s)
    };
    if take(&mut at, 8)? != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let version = u32::from_le_bytes(take(&mut at, 4)?.try_into().unwrap());
    if version != VERSION {
        return Err(CheckpointError::BadVersion(version));
    }
    let meta_len = u32::from_le_bytes(take(&mut at, 4)?.try_into().unwrap()) as usize;
    let meta: BTreeMap<String, String> = serde_json::from_slice(take(&mut at, meta_len)?)
        .map_err(|e| CheckpointError::BadMeta(e.to_string()))?;
    let model = match meta.get("model").map(String::as_str) {
        Some("qcnn") => ModelKind::Qcnn,
        Some("qrnn") => ModelKind::Qrnn,
        Some("qvit") => ModelKind::Qvit,
        other => {
            return Err(CheckpointError::BadMeta(format!(
                "unknown model {other:?}"
            )))
        }
    };
    let count = u32::from_le_bytes(take(&mut at, 4)?.try_into().unwrap()) as usize;
    let mut tensors = Vec::with_capacity(count);
    for _ in 0..count {
        let name_len = u16::from_le_bytes(take(&mut at, 2)?.try_into().unwrap()) as usize;
        let name = String::from_utf8(take(&mut at, name_len)?.to_vec())
            .map_err(|e| CheckpointError::BadMeta(e.to_string()))?;
        let ndim = take(&mut at, 1)?[0] as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(u64::from_le_bytes(take(&mut at, 8)?.try_into().unwrap()) as usize);
        }
        let len: usize = shape.iter().product();
        let raw = take(&mut at, len * 8)?;
        let data: Vec<f64> = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        tensors.push((name, shape, data));
    }
    Ok(Checkpoint {
        model,
        meta,
        tensors,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{Classifier, QcnnModel};

    #[test]
    fn roundtrip_preserves_params_bytewise() {
        let m = QcnnModel::new();
        let params = m.init_params(5);
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("a.ckpt");
        let p2 = dir.path().join("b.ckpt");
        let meta = BTreeMap::from([("epoch".to_string(), "7".to_string())]);
        save_checkpoint(&p1, m.kind(), &m.param_layout(), &params, &meta).unwrap();
        save_checkpoint(&p2, m.kind(), &m.param_layout(), &params, &meta).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());

        let ck = load_checkpoint(&p1).unwrap();
        assert_eq!(ck.model, crate::models::ModelKind::Qcnn);
        assert_eq!(ck.meta.get("epoch").unwrap(), "7");
        let restored = ck.to_params(&m.param_layout()).unwrap();
        assert_eq!(restored, params);
    }

    #[test]
    fn rejects_garbage() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.ckpt");
        std::fs::write(&p, b"not a checkpoint").unwrap();
        assert!(load_checkpoint(&p).is_err());
    }
}
