//! Binary tensor container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic   4 bytes  "SFT1"
//! dtype   1 byte   0 = float32, 1 = float64
//! rank    1 byte
//! dims    rank × u32
//! payload product(dims) × dtype size, row-major
//! meta    u32 byte length + UTF-8 "key=value" lines ('\n'-separated)
//! ```

use std::fs;
use std::path::Path;

use crate::io::IoError;

pub const TENSOR_MAGIC: &[u8; 4] = b"SFT1";

/// Tensor payload in one of the two supported element types.
#[derive(Debug, Clone, PartialEq)]
pub enum Tensor {
    F32 { dims: Vec<usize>, data: Vec<f32> },
    F64 { dims: Vec<usize>, data: Vec<f64> },
}

impl Tensor {
    pub fn dims(&self) -> &[usize] {
        match self {
            Tensor::F32 { dims, .. } => dims,
            Tensor::F64 { dims, .. } => dims,
        }
    }

    pub fn element_count(&self) -> usize {
        self.dims().iter().product()
    }

    fn dtype_code(&self) -> u8 {
        match self {
            Tensor::F32 { .. } => 0,
            Tensor::F64 { .. } => 1,
        }
    }

    pub fn as_f32(&self) -> Option<&[f32]> {
        match self {
            Tensor::F32 { data, .. } => Some(data),
            Tensor::F64 { .. } => None,
        }
    }

    pub fn as_f64(&self) -> Option<&[f64]> {
        match self {
            Tensor::F64 { data, .. } => Some(data),
            Tensor::F32 { .. } => None,
        }
    }
}

/// A tensor plus its key=value metadata lines.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorFile {
    pub tensor: Tensor,
    pub metadata: Vec<(String, String)>,
}

impl TensorFile {
    pub fn new(tensor: Tensor) -> TensorFile {
        TensorFile {
            tensor,
            metadata: Vec::new(),
        }
    }

    pub fn with_meta(mut self, key: &str, value: impl ToString) -> TensorFile {
        self.metadata.push((key.to_string(), value.to_string()));
        self
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        self.metadata
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    fn validate(&self) -> Result<(), IoError> {
        let expected = self.tensor.element_count();
        let actual = match &self.tensor {
            Tensor::F32 { data, .. } => data.len(),
            Tensor::F64 { data, .. } => data.len(),
        };
        if expected != actual {
            return Err(IoError::TensorFormat(format!(
                "payload holds {actual} elements, dims imply {expected}"
            )));
        }
        if self.tensor.dims().iter().any(|&d| d > u32::MAX as usize) {
            return Err(IoError::TensorFormat("dimension exceeds u32".into()));
        }
        for (key, value) in &self.metadata {
            if key.contains(['=', '\n']) || value.contains('\n') {
                return Err(IoError::TensorFormat(format!(
                    "metadata key/value may not contain '=' in key or newlines: {key}"
                )));
            }
        }
        Ok(())
    }
}

/// Serialize to the container byte layout.
pub fn encode_tensor(file: &TensorFile) -> Result<Vec<u8>, IoError> {
    file.validate()?;
    let dims = file.tensor.dims();
    let mut out = Vec::with_capacity(6 + dims.len() * 4 + file.tensor.element_count() * 8);
    out.extend_from_slice(TENSOR_MAGIC);
    out.push(file.tensor.dtype_code());
    out.push(dims.len() as u8);
    for &d in dims {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    match &file.tensor {
        Tensor::F32 { data, .. } => {
            for v in data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Tensor::F64 { data, .. } => {
            for v in data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    let meta = file
        .metadata
        .iter()
        .map(|(k, v)| format!("{k}={v}"))
        .collect::<Vec<_>>()
        .join("\n");
    out.extend_from_slice(&(meta.len() as u32).to_le_bytes());
    out.extend_from_slice(meta.as_bytes());
    Ok(out)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], IoError> {
        if self.pos + n > self.bytes.len() {
            return Err(IoError::TensorFormat(format!(
                "truncated: wanted {n} bytes at offset {}, file has {}",
                self.pos,
                self.bytes.len()
            )));
        }
        let slice = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }
}

/// Parse the container byte layout; strict about magic, dtype, dims,
/// payload length, and trailing bytes.
pub fn decode_tensor(bytes: &[u8]) -> Result<TensorFile, IoError> {
    let mut cur = Cursor { bytes, pos: 0 };
    let magic = cur.take(4)?;
    if magic != TENSOR_MAGIC {
        return Err(IoError::TensorFormat(format!("bad magic {magic:02x?}")));
    }
    let dtype = cur.take(1)?[0];
    let rank = cur.take(1)?[0] as usize;
    let mut dims = Vec::with_capacity(rank);
    let mut count: u64 = 1;
    for _ in 0..rank {
        let raw = cur.take(4)?;
        let d = u32::from_le_bytes(raw.try_into().unwrap()) as u64;
        count = count
            .checked_mul(d)
            .ok_or_else(|| IoError::TensorFormat("dimension product overflows".into()))?;
        dims.push(d as usize);
    }
    if count > (1 << 33) {
        return Err(IoError::TensorFormat(format!(
            "tensor of {count} elements exceeds the supported size"
        )));
    }
    let count = count as usize;

    let tensor = match dtype {
        0 => {
            let payload = cur.take(count * 4)?;
            let data = payload
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            Tensor::F32 { dims, data }
        }
        1 => {
            let payload = cur.take(count * 8)?;
            let data = payload
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            Tensor::F64 { dims, data }
        }
        other => {
            return Err(IoError::TensorFormat(format!("unknown dtype code {other}")));
        }
    };

    let meta_len = u32::from_le_bytes(cur.take(4)?.try_into().unwrap()) as usize;
    let meta_bytes = cur.take(meta_len)?;
    if cur.pos != bytes.len() {
        return Err(IoError::TensorFormat(format!(
            "{} trailing bytes after metadata",
            bytes.len() - cur.pos
        )));
    }
    let meta_str = std::str::from_utf8(meta_bytes)
        .map_err(|_| IoError::TensorFormat("metadata is not UTF-8".into()))?;
    let mut metadata = Vec::new();
    for line in meta_str.lines() {
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| IoError::TensorFormat(format!("metadata line without '=': {line}")))?;
        metadata.push((key.to_string(), value.to_string()));
    }
    Ok(TensorFile { tensor, metadata })
}

pub fn write_tensor(path: &Path, file: &TensorFile) -> Result<(), IoError> {
    let bytes = encode_tensor(file)?;
    fs::write(path, bytes).map_err(|e| IoError::File {
        path: path.to_path_buf(),
        source: e,
    })
}

pub fn read_tensor(path: &Path) -> Result<TensorFile, IoError> {
    let bytes = fs::read(path).map_err(|e| IoError::File {
        path: path.to_path_buf(),
        source: e,
    })?;
    decode_tensor(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn core_size_arithmetic() {
        let file = TensorFile::new(Tensor::F32 {
            dims: vec![2, 3],
            data: vec![0.0; 6],
        });
        let bytes = encode_tensor(&file).unwrap();
        // 4 magic + 1 dtype + 1 rank + 8 dims + 24 payload + 4 meta len
        assert_eq!(bytes.len(), 4 + 1 + 1 + 8 + 24 + 4);
    }

    #[test]
    fn corrupted_magic_rejected() {
        let file = TensorFile::new(Tensor::F32 {
            dims: vec![2],
            data: vec![1.0, 2.0],
        });
        let mut bytes = encode_tensor(&file).unwrap();
        bytes[0] = b'X';
        assert!(decode_tensor(&bytes).is_err());
    }

    #[test]
    fn truncated_payload_rejected() {
        let file = TensorFile::new(Tensor::F32 {
            dims: vec![4],
            data: vec![1.0; 4],
        });
        let bytes = encode_tensor(&file).unwrap();
        assert!(decode_tensor(&bytes[..bytes.len() - 6]).is_err());
    }

    #[test]
    fn round_trip_with_metadata_is_bit_exact() {
        let data: Vec<f32> = (0..64 * 64 * 100).map(|i| (i as f32).sin()).collect();
        let file = TensorFile::new(Tensor::F32 {
            dims: vec![64, 64, 100],
            data,
        })
        .with_meta("kind", "predictions")
        .with_meta("target", "toy");
        let bytes = encode_tensor(&file).unwrap();
        let parsed = decode_tensor(&bytes).unwrap();
        assert_eq!(parsed, file);
        let again = encode_tensor(&parsed).unwrap();
        assert_eq!(bytes, again);
    }

    #[test]
    fn f64_round_trip() {
        let file = TensorFile::new(Tensor::F64 {
            dims: vec![5],
            data: vec![1.0, -2.5, 1e-300, 3.7e200, 0.1],
        })
        .with_meta("kind", "checkpoint");
        let parsed = decode_tensor(&encode_tensor(&file).unwrap()).unwrap();
        assert_eq!(parsed, file);
    }

    #[test]
    fn unknown_dtype_rejected() {
        let file = TensorFile::new(Tensor::F32 {
            dims: vec![1],
            data: vec![0.0],
        });
        let mut bytes = encode_tensor(&file).unwrap();
        bytes[4] = 9;
        assert!(decode_tensor(&bytes).is_err());
    }
}
