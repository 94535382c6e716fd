//! Integrity-checked binary checkpoints.
//!
//! Layout: magic, format version, kind tag, payload length, SHA-256 of the
//! payload, then the bincode payload. Any truncation or bit flip is caught
//! before decoding.

use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::fs;
use std::io::Write;
use std::path::Path;
use thiserror::Error;

const MAGIC: &[u8; 8] = b"MAZECKPT";
const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("not a checkpoint file")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    UnsupportedVersion(u32),
    #[error("checkpoint holds `{found}`, expected `{expected}`")]
    WrongKind { expected: String, found: String },
    #[error("checkpoint is truncated")]
    Truncated,
    #[error("checkpoint payload fails its checksum")]
    ChecksumMismatch,
    #[error("could not encode checkpoint: {0}")]
    Encode(String),
    #[error("could not decode checkpoint: {0}")]
    Decode(String),
}

pub fn encode<T: Serialize>(kind: &str, value: &T) -> Result<Vec<u8>, CheckpointError> {
    let payload = bincode::serialize(value).map_err(|e| CheckpointError::Encode(e.to_string()))?;
    let mut out = Vec::with_capacity(payload.len() + 64 + kind.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(kind.len() as u32).to_le_bytes());
    out.extend_from_slice(kind.as_bytes());
    out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
    out.extend_from_slice(&Sha256::digest(&payload));
    out.extend_from_slice(&payload);
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        let end = self.at.checked_add(n).ok_or(CheckpointError::Truncated)?;
        let s = self.bytes.get(self.at..end).ok_or(CheckpointError::Truncated)?;
        self.at = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

pub fn decode<T: DeserializeOwned>(kind: &str, bytes: &[u8]) -> Result<T, CheckpointError> {
    let mut r = Reader { bytes, at: 0 };
    if r.take(MAGIC.len()).map_err(|_| CheckpointError::BadMagic)? != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(CheckpointError::UnsupportedVersion(version));
    }
    let kind_len = r.u32()? as usize;
    let found = String::from_utf8_lossy(r.take(kind_len)?).into_owned();
    if found != kind {
        return Err(CheckpointError::WrongKind { expected: kind.to_string(), found });
    }
    let len = usize::try_from(r.u64()?).map_err(|_| CheckpointError::Truncated)?;
    let digest = r.take(32)?;
    let payload = r.take(len)?;
    if r.at != bytes.len() {
        return Err(CheckpointError::Decode("trailing bytes".into()));
    }
    if Sha256::digest(payload).as_slice() != digest {
        return Err(CheckpointError::ChecksumMismatch);
    }
    bincode::deserialize(payload).map_err(|e| CheckpointError::Decode(e.to_string()))
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CheckpointError + '_ {
    move |source| CheckpointError::Io { path: path.display().to_string(), source }
}

/// Writes through a temporary file and renames it into place, so a crash
/// never leaves a half-written checkpoint under `path`.
pub fn save<T: Serialize>(path: &Path, kind: &str, value: &T) -> Result<(), CheckpointError> {
    let bytes = encode(kind, value)?;
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let tmp = path.with_extension("tmp");
    let mut f = fs::File::create(&tmp).map_err(io_err(&tmp))?;
    f.write_all(&bytes).map_err(io_err(&tmp))?;
    f.sync_all().map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))
}

pub fn load<T: DeserializeOwned>(path: &Path, kind: &str) -> Result<T, CheckpointError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    decode(kind, &bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_exact() {
        let v: Vec<f64> = vec![0.1, -3.5e-300, f64::MAX, 1.0 / 3.0];
        let back: Vec<f64> = decode("floats", &encode("floats", &v).unwrap()).unwrap();
        assert_eq!(v.iter().map(|x| x.to_bits()).collect::<Vec<_>>(), back.iter().map(|x| x.to_bits()).collect::<Vec<_>>());
    }

    #[test]
    fn truncation_detected() {
        let bytes = encode("floats", &vec![1.0f64; 16]).unwrap();
        for cut in [0, 5, 20, bytes.len() - 1] {
            assert!(decode::<Vec<f64>>("floats", &bytes[..cut]).is_err(), "cut {cut}");
        }
        assert!(matches!(decode::<Vec<f64>>("floats", &bytes[..bytes.len() - 1]), Err(CheckpointError::Truncated)));
    }

    #[test]
    fn bit_flip_detected() {
        let mut bytes = encode("floats", &vec![1.0f64; 16]).unwrap();
        let last = bytes.len() - 3;
        bytes[last] ^= 1;
        assert!(matches!(decode::<Vec<f64>>("floats", &bytes), Err(CheckpointError::ChecksumMismatch)));
    }

    #[test]
    fn kind_checked() {
        let bytes = encode("policy", &1u8).unwrap();
        assert!(matches!(decode::<u8>("run-state", &bytes), Err(CheckpointError::WrongKind { .. })));
        assert!(matches!(decode::<u8>("policy", b"garbage!garbage"), Err(CheckpointError::BadMagic)));
    }
}
