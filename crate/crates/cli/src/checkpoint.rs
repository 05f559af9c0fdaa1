//! Binary checkpoint container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic  "IBMD" (4 bytes)
//! u16    format version (currently 1)
//! u8     scale        u16 nf        u16 nd        u16 n_blocks
//! bytes  depth schedule, n_blocks x 3 letters ('B' | 'I')
//! u32    tensor count
//! per tensor:
//!   u16  name length, then that many UTF-8 bytes
//!   u8   dtype (0 = f32)
//!   u8   ndim, then ndim x u32 dims
//!   raw  little-endian payload, product(dims) elements
//! ```
//!
//! Every named tensor of the parameter store is serialized, including the
//! non-trainable batch-norm running statistics, so a loaded model is
//! bit-identical to the saved one.

use std::fmt;
use std::path::Path;

use ibmdn_core::arch::{build_ibmdn, DepthSchedule, Model, ModelSpec, OperatorKind};
use ibmdn_core::Tensor;

use crate::{CliError, Result};

pub const MAGIC: [u8; 4] = *b"IBMD";
pub const VERSION: u16 = 1;

/// What went wrong while reading a checkpoint file.
#[derive(Debug, PartialEq)]
pub enum CheckpointError {
    /// The file does not start with the container magic.
    NotACheckpoint,
    /// A future (or corrupt) format revision.
    UnsupportedVersion(u16),
    /// The tensor names do not match the model the header describes.
    ManifestMismatch(String),
    /// The file ends in the middle of a record.
    Truncated,
    /// Structurally valid framing around invalid content.
    Malformed(String),
}

impl fmt::Display for CheckpointError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CheckpointError::NotACheckpoint => write!(f, "not a checkpoint file"),
            CheckpointError::UnsupportedVersion(v) => {
                write!(f, "unsupported checkpoint version {v} (expected {VERSION})")
            }
            CheckpointError::ManifestMismatch(d) => write!(f, "checkpoint manifest mismatch: {d}"),
            CheckpointError::Truncated => write!(f, "checkpoint file is truncated"),
            CheckpointError::Malformed(d) => write!(f, "malformed checkpoint: {d}"),
        }
    }
}

impl std::error::Error for CheckpointError {}

impl From<CheckpointError> for CliError {
    fn from(e: CheckpointError) -> Self {
        CliError::Io(e.to_string())
    }
}

/// Serializes a model into the container format.
pub fn encode(model: &Model<f32>) -> Vec<u8> {
    let spec = model.spec();
    let store = model.store();
    let mut out = Vec::new();
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(spec.scale as u8);
    out.extend_from_slice(&(spec.nf as u16).to_le_bytes());
    out.extend_from_slice(&(spec.nd as u16).to_le_bytes());
    out.extend_from_slice(&(spec.n_blocks as u16).to_le_bytes());
    for triple in spec.schedule.triples() {
        for kind in triple {
            out.push(kind.letter() as u8);
        }
    }
    out.extend_from_slice(&(store.len() as u32).to_le_bytes());
    for (_, p) in store.iter() {
        let name = p.name().as_bytes();
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name);
        out.push(ibmdn_core::Dtype::F32.code());
        let shape = p.value().shape();
        out.push(shape.len() as u8);
        for &d in shape {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in p.value().data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

/// Byte-stream reader that turns overruns into `Truncated`.
struct Cursor<'a> {
    buf: &'a [u8],
    at: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        if self.at + n > self.buf.len() {
            return Err(CheckpointError::Truncated);
        }
        let s = &self.buf[self.at..self.at + n];
        self.at += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, CheckpointError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, CheckpointError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

/// Rebuilds a model from container bytes: the header yields the
/// `ModelSpec`, then every parameter is filled by name.
pub fn decode(bytes: &[u8]) -> Result<Model<f32>, CheckpointError> {
    let mut c = Cursor { buf: bytes, at: 0 };
    if bytes.len() < 4 || c.take(4)? != MAGIC {
        return Err(CheckpointError::NotACheckpoint);
    }
    let version = c.u16()?;
    if version != VERSION {
        return Err(CheckpointError::UnsupportedVersion(version));
    }
    let scale = c.u8()? as usize;
    let nf = c.u16()? as usize;
    let nd = c.u16()? as usize;
    let n_blocks = c.u16()? as usize;
    let mut triples = Vec::with_capacity(n_blocks);
    for _ in 0..n_blocks {
        let mut triple = [OperatorKind::Bsconv; 3];
        for slot in &mut triple {
            let b = c.u8()?;
            *slot = OperatorKind::from_letter(b as char)
                .map_err(|_| CheckpointError::Malformed(format!("schedule byte 0x{b:02x}")))?;
        }
        triples.push(triple);
    }
    let schedule =
        DepthSchedule::new(triples).map_err(|e| CheckpointError::Malformed(e.to_string()))?;

    // Frame all tensor records before touching any model state, so a
    // truncated file can never yield a partial model.
    let count = c.u32()? as usize;
    let mut records: Vec<(String, Tensor<f32>)> = Vec::with_capacity(count);
    for _ in 0..count {
        let name_len = c.u16()? as usize;
        let name = core::str::from_utf8(c.take(name_len)?)
            .map_err(|_| CheckpointError::Malformed("tensor name is not UTF-8".into()))?
            .to_owned();
        let dtype = c.u8()?;
        if dtype != ibmdn_core::Dtype::F32.code() {
            return Err(CheckpointError::Malformed(format!("unknown dtype code {dtype}")));
        }
        let ndim = c.u8()? as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(c.u32()? as usize);
        }
        let numel: usize = shape.iter().product();
        let raw = c.take(4 * numel)?;
        let data: Vec<f32> = raw
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect();
        if records.iter().any(|(n, _)| *n == name) {
            return Err(CheckpointError::ManifestMismatch(format!("duplicate tensor `{name}`")));
        }
        let value = Tensor::from_vec(shape, data)
            .map_err(|e| CheckpointError::Malformed(e.to_string()))?;
        records.push((name, value));
    }
    if c.at != bytes.len() {
        return Err(CheckpointError::Malformed(format!(
            "{} trailing bytes after the last tensor",
            bytes.len() - c.at
        )));
    }

    // The attention trunk width is not a header field; recover it from
    // the manifest (leading dim of the first spatial-attention conv),
    // falling back to the standard width.
    let chfab_channels = records
        .iter()
        .find(|(n, _)| n == "blocks.0.attn.spat.conv_in.pw.weight")
        .and_then(|(_, t)| t.shape().first().copied())
        .or_else(|| ModelSpec::standard(2).ok().map(|s| s.chfab_channels))
        .unwrap_or(1);
    let spec = ModelSpec { scale, nf, nd, n_blocks, schedule, chfab_channels };
    spec.validate().map_err(|e| CheckpointError::Malformed(e.to_string()))?;
    let mut model =
        build_ibmdn::<f32>(&spec, 0).map_err(|e| CheckpointError::Malformed(e.to_string()))?;
    if count != model.store().len() {
        return Err(CheckpointError::ManifestMismatch(format!(
            "file declares {count} tensors, the described model has {}",
            model.store().len()
        )));
    }

    for (name, value) in &records {
        let id = model
            .store()
            .id_by_name(name)
            .ok_or_else(|| CheckpointError::ManifestMismatch(format!("unknown tensor `{name}`")))?;
        model
            .store_mut()
            .set_value(id, value)
            .map_err(|e| CheckpointError::ManifestMismatch(e.to_string()))?;
    }
    // Equal counts plus no unknowns or duplicates imply full coverage;
    // double-check so a logic slip can't slip a half-filled model out.
    if let Some((_, p)) =
        model.store().iter().find(|(_, p)| !records.iter().any(|(n, _)| n == p.name()))
    {
        return Err(CheckpointError::ManifestMismatch(format!("missing tensor `{}`", p.name())));
    }
    Ok(model)
}

/// Writes a model checkpoint to disk.
pub fn save_checkpoint(model: &Model<f32>, path: &Path) -> Result<()> {
    std::fs::write(path, encode(model))
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

/// Reads a model checkpoint from disk.
pub fn load_checkpoint(path: &Path) -> Result<Model<f32>> {
    let bytes =
        std::fs::read(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    decode(&bytes).map_err(CliError::from)
}
