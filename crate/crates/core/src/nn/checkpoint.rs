//! Binary model checkpoints.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! "HBCE"                       magic
//! u32   version (= 1)
//! u32*6 input_h input_w conv_filters conv_kernel dense_units output_labels
//! f64   dropout_rate
//! u64   tensor count (= 6)
//! per tensor, in order conv_w conv_b fc1_w fc1_b fc2_w fc2_b:
//!   u32   rank
//!   u32*  dims
//!   f64*  row-major payload
//! ```
//!
//! Readers reject unknown magic or version, truncated payloads, trailing
//! bytes, and tensor shapes inconsistent with the config block.

use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::tensor::Tensor;

use super::{expected_shapes, Model, ModelConfig, Params, TENSOR_NAMES};

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"HBCE";
pub const CHECKPOINT_VERSION: u32 = 1;

const TENSOR_COUNT: u64 = 6;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a checkpoint file (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    UnsupportedVersion(u32),
    #[error("checkpoint is truncated")]
    Truncated,
    #[error("{0} trailing bytes after checkpoint payload")]
    TrailingData(usize),
    #[error("malformed checkpoint: {0}")]
    Malformed(String),
}

pub fn encode(model: &Model) -> Result<Vec<u8>, CheckpointError> {
    let cfg = &model.config;
    let dims = [
        cfg.input_h,
        cfg.input_w,
        cfg.conv_filters,
        cfg.conv_kernel,
        cfg.dense_units,
        cfg.output_labels,
    ];
    let mut out = Vec::new();
    out.extend_from_slice(&CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    for d in dims {
        let d: u32 = d
            .try_into()
            .map_err(|_| CheckpointError::Malformed(format!("dimension {d} exceeds u32")))?;
        out.extend_from_slice(&d.to_le_bytes());
    }
    out.extend_from_slice(&cfg.dropout_rate.to_le_bytes());
    out.extend_from_slice(&TENSOR_COUNT.to_le_bytes());
    for tensor in model.params.tensors() {
        let rank: u32 = tensor.shape().len() as u32;
        out.extend_from_slice(&rank.to_le_bytes());
        for &d in tensor.shape() {
            let d: u32 = d
                .try_into()
                .map_err(|_| CheckpointError::Malformed(format!("dimension {d} exceeds u32")))?;
            out.extend_from_slice(&d.to_le_bytes());
        }
        for &v in tensor.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        if self.pos + n > self.bytes.len() {
            return Err(CheckpointError::Truncated);
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, CheckpointError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn decode(bytes: &[u8]) -> Result<Model, CheckpointError> {
    let mut cur = Cursor { bytes, pos: 0 };
    if cur.take(4)? != CHECKPOINT_MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let version = cur.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(CheckpointError::UnsupportedVersion(version));
    }
    let config = ModelConfig {
        input_h: cur.u32()? as usize,
        input_w: cur.u32()? as usize,
        conv_filters: cur.u32()? as usize,
        conv_kernel: cur.u32()? as usize,
        dense_units: cur.u32()? as usize,
        output_labels: cur.u32()? as usize,
        dropout_rate: cur.f64()?,
    };
    config
        .validate()
        .map_err(|e| CheckpointError::Malformed(e.to_string()))?;
    let count = cur.u64()?;
    if count != TENSOR_COUNT {
        return Err(CheckpointError::Malformed(format!(
            "expected {TENSOR_COUNT} tensors, header says {count}"
        )));
    }

    let mut tensors = Vec::with_capacity(6);
    for (expected, name) in expected_shapes(&config).into_iter().zip(TENSOR_NAMES) {
        let rank = cur.u32()? as usize;
        if rank != expected.len() {
            return Err(CheckpointError::Malformed(format!(
                "{name} must have rank {}, got {rank}",
                expected.len()
            )));
        }
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(cur.u32()? as usize);
        }
        if shape != expected {
            return Err(CheckpointError::Malformed(format!(
                "{name} must have shape {expected:?}, got {shape:?}"
            )));
        }
        let n: usize = shape.iter().product();
        let mut data = Vec::with_capacity(n);
        for _ in 0..n {
            data.push(cur.f64()?);
        }
        tensors.push(Tensor::from_vec(&shape, data).expect("shape and data agree"));
    }
    if cur.pos != bytes.len() {
        return Err(CheckpointError::TrailingData(bytes.len() - cur.pos));
    }

    let mut it = tensors.into_iter();
    let params = Params {
        conv_w: it.next().unwrap(),
        conv_b: it.next().unwrap(),
        fc1_w: it.next().unwrap(),
        fc1_b: it.next().unwrap(),
        fc2_w: it.next().unwrap(),
        fc2_b: it.next().unwrap(),
    };
    Ok(Model { config, params })
}

pub fn save_checkpoint<P: AsRef<Path>>(path: P, model: &Model) -> Result<(), CheckpointError> {
    fs::write(path, encode(model)?)?;
    Ok(())
}

pub fn load_checkpoint<P: AsRef<Path>>(path: P) -> Result<Model, CheckpointError> {
    decode(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> Model {
        let cfg = ModelConfig {
            input_h: 6,
            input_w: 7,
            conv_filters: 2,
            conv_kernel: 3,
            dense_units: 4,
            output_labels: 3,
            dropout_rate: 0.25,
        };
        Model::init(cfg, 99).unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let m = model();
        let bytes = encode(&m).unwrap();
        let back = decode(&bytes).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn file_round_trip() {
        let m = model();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        save_checkpoint(&path, &m).unwrap();
        let back = load_checkpoint(&path).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn header_layout_is_pinned() {
        let m = model();
        let bytes = encode(&m).unwrap();
        assert_eq!(&bytes[..4], b"HBCE");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 6);
        assert_eq!(u32::from_le_bytes(bytes[12..16].try_into().unwrap()), 7);
        assert_eq!(
            f64::from_le_bytes(bytes[32..40].try_into().unwrap()),
            0.25
        );
        assert_eq!(u64::from_le_bytes(bytes[40..48].try_into().unwrap()), 6);
        // first tensor record: rank 3, dims 2,3,3
        assert_eq!(u32::from_le_bytes(bytes[48..52].try_into().unwrap()), 3);
        assert_eq!(u32::from_le_bytes(bytes[52..56].try_into().unwrap()), 2);

        let n_params: usize = m.params.tensors().iter().map(|t| t.len()).sum();
        let dims: usize = m.params.tensors().iter().map(|t| t.shape().len()).sum();
        assert_eq!(bytes.len(), 48 + 6 * 4 + dims * 4 + n_params * 8);
    }

    #[test]
    fn rejects_bad_magic() {
        let mut bytes = encode(&model()).unwrap();
        bytes[0] = b'X';
        assert!(matches!(decode(&bytes), Err(CheckpointError::BadMagic)));
    }

    #[test]
    fn rejects_unknown_version() {
        let mut bytes = encode(&model()).unwrap();
        bytes[4] = 2;
        assert!(matches!(
            decode(&bytes),
            Err(CheckpointError::UnsupportedVersion(2))
        ));
    }

    #[test]
    fn rejects_truncation_anywhere() {
        let bytes = encode(&model()).unwrap();
        for cut in [3, 7, 20, 47, 60, bytes.len() - 1] {
            assert!(
                matches!(decode(&bytes[..cut]), Err(CheckpointError::Truncated)),
                "cut at {cut}"
            );
        }
    }

    #[test]
    fn rejects_trailing_bytes() {
        let mut bytes = encode(&model()).unwrap();
        bytes.push(0);
        assert!(matches!(
            decode(&bytes),
            Err(CheckpointError::TrailingData(1))
        ));
    }

    #[test]
    fn rejects_shape_inconsistent_with_config() {
        let mut bytes = encode(&model()).unwrap();
        // dims of conv_w start at offset 52; claim 3 filters instead of 2
        bytes[52] = 3;
        assert!(matches!(
            decode(&bytes),
            Err(CheckpointError::Malformed(_))
        ));
    }

    #[test]
    fn rejects_bad_config_values() {
        let mut bytes = encode(&model()).unwrap();
        // conv_kernel field (offset 20) set to an even value
        bytes[20] = 4;
        assert!(matches!(
            decode(&bytes),
            Err(CheckpointError::Malformed(_))
        ));
    }

    #[test]
    fn rejects_wrong_tensor_count() {
        let mut bytes = encode(&model()).unwrap();
        bytes[40] = 5;
        assert!(matches!(
            decode(&bytes),
            Err(CheckpointError::Malformed(_))
        ));
    }
}
