//! Versioned binary containers: 8-byte magic, little-endian u32 version,
//! then a bincode payload.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

pub fn encode<T: Serialize>(magic: &[u8; 8], version: u32, payload: &T) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(1024);
    out.extend_from_slice(magic);
    out.extend_from_slice(&version.to_le_bytes());
    bincode::serialize_into(&mut out, payload)?;
    Ok(out)
}

pub fn decode<T: DeserializeOwned>(magic: &[u8; 8], version: u32, bytes: &[u8]) -> Result<T> {
    if bytes.len() < 12 || &bytes[..8] != magic {
        return Err(Error::Serde(format!(
            "bad magic, expected {:?}",
            String::from_utf8_lossy(magic)
        )));
    }
    let v = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if v != version {
        return Err(Error::Serde(format!(
            "unsupported version {v}, expected {version}"
        )));
    }
    Ok(bincode::deserialize(&bytes[12..])?)
}

pub fn write<T: Serialize>(path: impl AsRef<Path>, magic: &[u8; 8], version: u32, payload: &T) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode(magic, version, payload)?).map_err(|e| Error::io(path, e))
}

pub fn read<T: DeserializeOwned>(path: impl AsRef<Path>, magic: &[u8; 8], version: u32) -> Result<T> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(magic, version, &bytes)
}
