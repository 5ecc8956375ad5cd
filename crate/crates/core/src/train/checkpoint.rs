//! Versioned checkpoint container: a JSON header line followed by raw
//! little-endian f64 parameter blocks. Save → load round trips are
//! bit-exact.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::clad::{CladModel, ModelDims};
use crate::error::{Error, Result};
use crate::grad::Tensor;

pub const CHECKPOINT_VERSION: u32 = 1;

/// Shape of the model a checkpoint restores.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ModelSpec {
    pub dims: ModelDims,
    pub trainable_encoder: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ParamInfo {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Header {
    format_version: u32,
    model: ModelSpec,
    params: Vec<ParamInfo>,
    config: serde_json::Value,
    epoch: usize,
    metrics: BTreeMap<String, f64>,
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub format_version: u32,
    pub model: ModelSpec,
    pub params: Vec<(String, Tensor)>,
    pub config: serde_json::Value,
    pub epoch: usize,
    pub metrics: BTreeMap<String, f64>,
}

impl Checkpoint {
    pub fn from_model(
        model: &CladModel,
        config: serde_json::Value,
        epoch: usize,
        metrics: BTreeMap<String, f64>,
    ) -> Self {
        Checkpoint {
            format_version: CHECKPOINT_VERSION,
            model: ModelSpec {
                dims: model.dims,
                trainable_encoder: model.encoder.is_some(),
            },
            params: model
                .named_params()
                .into_iter()
                .map(|(n, t)| (n, t.clone()))
                .collect(),
            config,
            epoch,
            metrics,
        }
    }

    /// Rebuilds the model this checkpoint was taken from.
    pub fn restore_model(&self) -> Result<CladModel> {
        let mut model = CladModel::init(self.model.dims, self.model.trainable_encoder, 0);
        let mut stored: BTreeMap<&str, &Tensor> =
            self.params.iter().map(|(n, t)| (n.as_str(), t)).collect();
        for (name, param) in model.named_params_mut() {
            let tensor = stored.remove(name.as_str()).ok_or_else(|| {
                Error::Checkpoint(format!("checkpoint is missing parameter {name}"))
            })?;
            if tensor.shape() != param.shape() {
                return Err(Error::Checkpoint(format!(
                    "parameter {name} has shape {:?}, expected {:?}",
                    tensor.shape(),
                    param.shape()
                )));
            }
            *param = tensor.clone();
        }
        if let Some((extra, _)) = stored.into_iter().next() {
            return Err(Error::Checkpoint(format!(
                "checkpoint has unexpected parameter {extra}"
            )));
        }
        Ok(model)
    }
}

pub fn save_checkpoint(path: &Path, checkpoint: &Checkpoint) -> Result<()> {
    let header = Header {
        format_version: checkpoint.format_version,
        model: checkpoint.model,
        params: checkpoint
            .params
            .iter()
            .map(|(name, t)| ParamInfo {
                name: name.clone(),
                shape: t.shape().to_vec(),
            })
            .collect(),
        config: checkpoint.config.clone(),
        epoch: checkpoint.epoch,
        metrics: checkpoint.metrics.clone(),
    };
    let mut file = std::fs::File::create(path)?;
    writeln!(
        file,
        "{}",
        serde_json::to_string(&header).expect("header serializes")
    )?;
    for (_, tensor) in &checkpoint.params {
        for &v in tensor.values() {
            file.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let file = std::fs::File::open(path)?;
    let mut reader = BufReader::new(file);
    let mut header_line = String::new();
    reader.read_line(&mut header_line)?;
    let header: Header = serde_json::from_str(header_line.trim_end())
        .map_err(|e| Error::Checkpoint(format!("bad header: {e}")))?;
    if header.format_version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!(
            "format version {} is not supported (expected {CHECKPOINT_VERSION})",
            header.format_version
        )));
    }
    let mut params = Vec::with_capacity(header.params.len());
    for info in &header.params {
        let len: usize = info.shape.iter().product();
        let mut values = Vec::with_capacity(len);
        let mut buf = [0u8; 8];
        for _ in 0..len {
            reader.read_exact(&mut buf).map_err(|e| {
                Error::Checkpoint(format!("truncated block for {}: {e}", info.name))
            })?;
            values.push(f64::from_le_bytes(buf));
        }
        params.push((info.name.clone(), Tensor::new(&info.shape, values)?));
    }
    let mut trailing = Vec::new();
    reader.read_to_end(&mut trailing)?;
    if !trailing.is_empty() {
        return Err(Error::Checkpoint(format!(
            "{} unexpected trailing bytes",
            trailing.len()
        )));
    }
    Ok(Checkpoint {
        format_version: header.format_version,
        model: header.model,
        params,
        config: header.config,
        epoch: header.epoch,
        metrics: header.metrics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec_dims() -> ModelDims {
        ModelDims {
            languages: 5,
            dims: 5,
            teacher_width: 7,
            student_width: 9,
            proj_width: 4,
        }
    }

    #[test]
    fn roundtrip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let model = CladModel::init(spec_dims(), true, 99);
        let mut metrics = BTreeMap::new();
        metrics.insert("val_ba".to_string(), 0.875);
        let ckpt = Checkpoint::from_model(&model, serde_json::json!({"lr": 1e-3}), 7, metrics);
        save_checkpoint(&path, &ckpt).unwrap();
        let loaded = load_checkpoint(&path).unwrap();
        assert_eq!(loaded.epoch, 7);
        let restored = loaded.restore_model().unwrap();
        for ((_, a), (_, b)) in model.named_params().iter().zip(restored.named_params()) {
            assert_eq!(a.shape(), b.shape());
            for (x, y) in a.values().iter().zip(b.values()) {
                assert_eq!(x.to_bits(), y.to_bits(), "round trip must be 0 ULP");
            }
        }
    }

    #[test]
    fn version_mismatch_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let model = CladModel::init(spec_dims(), false, 1);
        let mut ckpt =
            Checkpoint::from_model(&model, serde_json::Value::Null, 0, BTreeMap::new());
        ckpt.format_version = 999;
        save_checkpoint(&path, &ckpt).unwrap();
        match load_checkpoint(&path) {
            Err(Error::Checkpoint(msg)) => assert!(msg.contains("999")),
            other => panic!("expected version error, got {other:?}"),
        }
    }
}
