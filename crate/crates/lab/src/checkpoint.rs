//! Versioned binary model checkpoints.
//!
//! Layout (little endian): magic `RLCK`, `u32` format version, `u32` length
//! of the model config text, the config as `key=value` lines, `u64`
//! parameter count, then the parameters as raw `f64` bits. Reloading is
//! bit-exact.

use std::path::Path;

use radlog_core::field::RadianceModel;

use crate::config::{format_kv, model_from_kv, model_to_kv, KeyValues};
use crate::fsutil::write_atomic;
use crate::{LabError, Result};

const MAGIC: &[u8; 4] = b"RLCK";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn encode_checkpoint(model: &RadianceModel) -> Vec<u8> {
    let config = format_kv(&model_to_kv(&model.config));
    let mut out = Vec::with_capacity(20 + config.len() + 8 * model.params.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(config.len() as u32).to_le_bytes());
    out.extend_from_slice(config.as_bytes());
    out.extend_from_slice(&(model.params.len() as u64).to_le_bytes());
    for p in &model.params {
        out.extend_from_slice(&p.to_bits().to_le_bytes());
    }
    out
}

fn take<'a>(bytes: &mut &'a [u8], n: usize) -> Result<&'a [u8]> {
    if bytes.len() < n {
        return Err(LabError::invalid("checkpoint is truncated"));
    }
    let (head, tail) = bytes.split_at(n);
    *bytes = tail;
    Ok(head)
}

pub fn decode_checkpoint(mut bytes: &[u8], source: &Path) -> Result<RadianceModel> {
    if take(&mut bytes, 4)? != MAGIC {
        return Err(LabError::invalid(format!("{} is not a model checkpoint", source.display())));
    }
    let version = u32::from_le_bytes(take(&mut bytes, 4)?.try_into().expect("4 bytes"));
    if version != CHECKPOINT_VERSION {
        return Err(LabError::invalid(format!(
            "{}: checkpoint version {version}, expected {CHECKPOINT_VERSION}",
            source.display()
        )));
    }
    let len = u32::from_le_bytes(take(&mut bytes, 4)?.try_into().expect("4 bytes")) as usize;
    let text = std::str::from_utf8(take(&mut bytes, len)?)
        .map_err(|_| LabError::invalid("checkpoint config is not UTF-8"))?;
    let config = model_from_kv(&KeyValues::parse(text, source)?)?;
    let count = u64::from_le_bytes(take(&mut bytes, 8)?.try_into().expect("8 bytes")) as usize;
    if bytes.len() != count * 8 {
        return Err(LabError::invalid(format!(
            "{}: expected {count} parameters, found {} bytes",
            source.display(),
            bytes.len()
        )));
    }
    let params = bytes
        .chunks_exact(8)
        .map(|c| f64::from_bits(u64::from_le_bytes(c.try_into().expect("8 bytes"))))
        .collect();
    Ok(RadianceModel::from_parts(config, params)?)
}

pub fn save_checkpoint(path: &Path, model: &RadianceModel) -> Result<()> {
    write_atomic(path, &encode_checkpoint(model))
}

pub fn load_checkpoint(path: &Path) -> Result<RadianceModel> {
    let bytes = std::fs::read(path).map_err(|e| LabError::io(path, e))?;
    decode_checkpoint(&bytes, path)
}
