//! Binary checkpoint container: magic, version, a JSON metadata blob and a
//! table of named little-endian tensors.

use std::path::Path;

use crate::nn::{ParamStore, Scalar, Tensor};

pub const MAGIC: &[u8; 4] = b"MTCK";
pub const VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("bad magic: not a checkpoint file")]
    BadMagic,
    #[error("unsupported checkpoint version {found} (this build reads version {VERSION})")]
    UnsupportedVersion { found: u32 },
    #[error("truncated checkpoint: {0}")]
    Truncated(String),
    #[error("tensor `{name}` has dtype code {found}, expected {expected}")]
    Dtype { name: String, found: u8, expected: u8 },
    #[error("malformed checkpoint: {0}")]
    Malformed(String),
    #[error("checkpoint metadata: {0}")]
    Metadata(#[from] serde_json::Error),
}

/// Decoded file contents. Tensors keep their file order.
#[derive(Clone, Debug, PartialEq)]
pub struct RawCheckpoint<F> {
    pub metadata: serde_json::Value,
    pub tensors: Vec<(String, Tensor<F>)>,
}

/// Serializes metadata and every parameter of `store` in registration
/// order.
pub fn encode_checkpoint<F: Scalar>(metadata: &serde_json::Value, store: &ParamStore<F>) -> Vec<u8> {
    let meta = serde_json::to_vec(metadata).expect("JSON values serialize");
    let mut out = Vec::with_capacity(meta.len() + 4 * store.num_weights() + 64);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(meta.len() as u64).to_le_bytes());
    out.extend_from_slice(&meta);
    out.extend_from_slice(&(store.len() as u64).to_le_bytes());
    for (_, p) in store.iter() {
        out.extend_from_slice(&(p.name.len() as u32).to_le_bytes());
        out.extend_from_slice(p.name.as_bytes());
        out.push(F::DTYPE);
        out.extend_from_slice(&(p.value.shape().len() as u32).to_le_bytes());
        for &d in p.value.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for &v in p.value.data() {
            v.write_le(&mut out);
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], CheckpointError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| CheckpointError::Truncated(format!("{what} at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self, what: &str) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }

    fn len(&mut self, what: &str) -> Result<usize, CheckpointError> {
        usize::try_from(self.u64(what)?).map_err(|_| CheckpointError::Malformed(format!("{what} does not fit in memory")))
    }
}

/// Parses a whole checkpoint; nothing is returned unless every byte checks
/// out.
pub fn decode_checkpoint<F: Scalar>(bytes: &[u8]) -> Result<RawCheckpoint<F>, CheckpointError> {
    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let mut r = Reader { bytes, pos: MAGIC.len() };
    let version = r.u32("format version")?;
    if version != VERSION {
        return Err(CheckpointError::UnsupportedVersion { found: version });
    }
    let meta_len = r.len("metadata length")?;
    let metadata = serde_json::from_slice(r.take(meta_len, "metadata")?)?;
    let count = r.len("tensor count")?;
    let mut tensors = Vec::new();
    for i in 0..count {
        let name_len = r.u32("tensor name length")? as usize;
        let name = std::str::from_utf8(r.take(name_len, "tensor name")?)
            .map_err(|_| CheckpointError::Malformed(format!("tensor {i} name is not UTF-8")))?
            .to_string();
        let dtype = r.take(1, "dtype")?[0];
        if dtype != F::DTYPE {
            return Err(CheckpointError::Dtype { name, found: dtype, expected: F::DTYPE });
        }
        let rank = r.u32("tensor rank")? as usize;
        let mut shape = Vec::with_capacity(rank.min(8));
        for _ in 0..rank {
            shape.push(r.len("tensor dims")?);
        }
        let n = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d));
        let bytes_len = n.and_then(|n| n.checked_mul(F::BYTES));
        let bytes_len = bytes_len.ok_or_else(|| CheckpointError::Malformed(format!("tensor `{name}` is too large")))?;
        let raw = r.take(bytes_len, "tensor data")?;
        let data = raw.chunks_exact(F::BYTES).map(F::read_le).collect();
        tensors.push((name, Tensor::new(shape, data)));
    }
    if r.pos != bytes.len() {
        return Err(CheckpointError::Malformed(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    Ok(RawCheckpoint { metadata, tensors })
}

pub fn write_checkpoint_file<F: Scalar>(
    path: &Path,
    metadata: &serde_json::Value,
    store: &ParamStore<F>,
) -> Result<(), CheckpointError> {
    std::fs::write(path, encode_checkpoint(metadata, store))
        .map_err(|source| CheckpointError::Io { path: path.display().to_string(), source })
}

pub fn read_checkpoint_file<F: Scalar>(path: &Path) -> Result<RawCheckpoint<F>, CheckpointError> {
    let bytes =
        std::fs::read(path).map_err(|source| CheckpointError::Io { path: path.display().to_string(), source })?;
    decode_checkpoint(&bytes)
}
