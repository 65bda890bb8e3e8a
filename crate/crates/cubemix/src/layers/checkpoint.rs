//! Checkpoint file format.
//!
//! Layout: an 8-byte little-endian header length, a JSON header
//! `{format_version, config, params}` where `params` is the ordered
//! parameter manifest (name, shape, byte offset and element count into the
//! payload), then the payload: each parameter's values as little-endian
//! 32-bit floats in manifest order. Loading validates every name and shape
//! against the embedded config before reading values.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::config::CubeMLPConfig;
use super::params::{build_store_layout, ParamStore};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ManifestEntry {
    name: String,
    shape: Vec<usize>,
    /// Byte offset into the payload section.
    offset: u64,
    /// Element count.
    len: u64,
}

#[derive(Serialize, Deserialize)]
struct Header {
    format_version: u32,
    config: CubeMLPConfig,
    params: Vec<ManifestEntry>,
}

/// Writes `params` for `cfg` to `path`. Values are stored at 32-bit
/// precision regardless of the in-memory scalar type.
pub fn save<T: Scalar>(path: &Path, cfg: &CubeMLPConfig, params: &ParamStore<T>) -> Result<()> {
    let mut manifest = Vec::with_capacity(params.len());
    let mut offset = 0u64;
    for p in params.iter() {
        manifest.push(ManifestEntry {
            name: p.name.clone(),
            shape: p.shape.dims(),
            offset,
            len: p.value.len() as u64,
        });
        offset += 4 * p.value.len() as u64;
    }
    let header = Header {
        format_version: FORMAT_VERSION,
        config: cfg.clone(),
        params: manifest,
    };
    let header_bytes =
        serde_json::to_vec(&header).map_err(|e| Error::config(format!("checkpoint header: {e}")))?;

    let mut file = File::create(path).map_err(Error::io(path))?;
    file.write_all(&(header_bytes.len() as u64).to_le_bytes())
        .map_err(Error::io(path))?;
    file.write_all(&header_bytes).map_err(Error::io(path))?;
    let mut payload = Vec::with_capacity(offset as usize);
    for p in params.iter() {
        for &v in &p.value {
            payload.extend_from_slice(&(v.to_f64() as f32).to_le_bytes());
        }
    }
    file.write_all(&payload).map_err(Error::io(path))?;
    Ok(())
}

/// Reads a checkpoint, returning the embedded config and a parameter store
/// with zeroed gradients.
pub fn load<T: Scalar>(path: &Path) -> Result<(CubeMLPConfig, ParamStore<T>)> {
    let mut file = File::open(path).map_err(Error::io(path))?;
    let mut len_bytes = [0u8; 8];
    file.read_exact(&mut len_bytes).map_err(Error::io(path))?;
    let header_len = u64::from_le_bytes(len_bytes) as usize;
    let mut header_bytes = vec![0u8; header_len];
    file.read_exact(&mut header_bytes).map_err(Error::io(path))?;
    let header: Header = serde_json::from_slice(&header_bytes)
        .map_err(|e| Error::config(format!("checkpoint header: {e}")))?;
    if header.format_version != FORMAT_VERSION {
        return Err(Error::config(format!(
            "unsupported checkpoint format version {}",
            header.format_version
        )));
    }
    header.config.validate()?;

    let mut payload = Vec::new();
    file.read_to_end(&mut payload).map_err(Error::io(path))?;

    let mut store = build_store_layout::<T>(&header.config);
    if store.len() != header.params.len() {
        return Err(Error::config(format!(
            "checkpoint lists {} parameters, config implies {}",
            header.params.len(),
            store.len()
        )));
    }
    for (param, entry) in store.iter_mut().zip(&header.params) {
        if param.name != entry.name {
            return Err(Error::config(format!(
                "checkpoint parameter order mismatch: expected {}, found {}",
                param.name, entry.name
            )));
        }
        if param.shape.dims() != entry.shape {
            return Err(Error::config(format!(
                "checkpoint shape mismatch for {}: expected {:?}, found {:?}",
                param.name,
                param.shape.dims(),
                entry.shape
            )));
        }
        if entry.len as usize != param.value.len() {
            return Err(Error::config(format!(
                "checkpoint length mismatch for {}",
                param.name
            )));
        }
        let start = entry.offset as usize;
        let end = start + 4 * entry.len as usize;
        if end > payload.len() {
            return Err(Error::config(format!(
                "checkpoint payload truncated at {}",
                param.name
            )));
        }
        for (k, v) in param.value.iter_mut().enumerate() {
            let bytes: [u8; 4] = payload[start + 4 * k..start + 4 * k + 4]
                .try_into()
                .expect("slice of length 4");
            *v = T::from_f64(f32::from_le_bytes(bytes) as f64);
        }
    }
    Ok((header.config, store))
}
