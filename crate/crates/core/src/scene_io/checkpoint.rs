//! Binary parameter checkpoints with a plain-text metadata sidecar.
//!
//! Layout: magic `CERFCKPT`, `u32` version, `u8` dtype length + dtype name, `u64` step,
//! `u64` config length + config JSON, `u64` parameter count + little-endian values,
//! then a SHA-256 digest of everything before it.

use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::config::CerfConfig;
use crate::error::{CerfError, Result};
use crate::linalg::Real;

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"CERFCKPT";

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint<T> {
    pub params: Vec<T>,
    pub config: CerfConfig,
    pub step: u64,
}

/// `model.ckpt` → `model.ckpt.meta.txt`.
pub fn metadata_path(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".meta.txt");
    PathBuf::from(name)
}

fn encode<T: Real>(ckpt: &Checkpoint<T>) -> Vec<u8> {
    let config = serde_json::to_string(&ckpt.config).expect("config serializes");
    let mut out = Vec::with_capacity(64 + config.len() + ckpt.params.len() * T::BYTES);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.push(T::DTYPE.len() as u8);
    out.extend_from_slice(T::DTYPE.as_bytes());
    out.extend_from_slice(&ckpt.step.to_le_bytes());
    out.extend_from_slice(&(config.len() as u64).to_le_bytes());
    out.extend_from_slice(config.as_bytes());
    out.extend_from_slice(&(ckpt.params.len() as u64).to_le_bytes());
    for p in &ckpt.params {
        p.write_le(&mut out);
    }
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    out
}

fn metadata<T: Real>(ckpt: &Checkpoint<T>) -> String {
    format!(
        "format: CERFCKPT v{CHECKPOINT_VERSION}\nstep: {}\nencoder: {}\nablation: {}\nparams: {} ({})\nconfig:\n{}\n",
        ckpt.step,
        ckpt.config.encoder,
        ckpt.config.train.ablation.label(),
        ckpt.params.len(),
        T::DTYPE,
        ckpt.config.to_json()
    )
}

/// Writes the checkpoint (via a temporary file and rename) and its sidecar.
pub fn save_checkpoint<T: Real>(ckpt: &Checkpoint<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CerfError::io(dir, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    std::fs::write(&tmp, encode(ckpt)).map_err(|e| CerfError::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| CerfError::io(path, e))?;
    let meta = metadata_path(path);
    std::fs::write(&meta, metadata(ckpt)).map_err(|e| CerfError::io(&meta, e))
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| CerfError::Checkpoint("file is truncated".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

pub fn load_checkpoint<T: Real>(path: impl AsRef<Path>) -> Result<Checkpoint<T>> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| CerfError::io(path, e))?;
    decode(&bytes).map_err(|e| match e {
        CerfError::Checkpoint(m) => CerfError::Checkpoint(format!("{}: {m}", path.display())),
        other => other,
    })
}

fn decode<T: Real>(bytes: &[u8]) -> Result<Checkpoint<T>> {
    if bytes.len() < MAGIC.len() + 32 || &bytes[..MAGIC.len()] != MAGIC {
        return Err(CerfError::Checkpoint("not a checkpoint file".into()));
    }
    let (body, digest) = bytes.split_at(bytes.len() - 32);
    if Sha256::digest(body).as_slice() != digest {
        return Err(CerfError::Checkpoint("checksum mismatch (corrupt or truncated)".into()));
    }
    let mut r = Reader { bytes: body, pos: MAGIC.len() };
    let version = u32::from_le_bytes(r.take(4)?.try_into().expect("4 bytes"));
    if version != CHECKPOINT_VERSION {
        return Err(CerfError::Checkpoint(format!(
            "version {version} is not supported (expected {CHECKPOINT_VERSION})"
        )));
    }
    let dlen = r.take(1)?[0] as usize;
    let dtype = std::str::from_utf8(r.take(dlen)?).unwrap_or("?");
    if dtype != T::DTYPE {
        return Err(CerfError::Checkpoint(format!("stored as {dtype}, requested {}", T::DTYPE)));
    }
    let step = r.u64()?;
    let clen = r.u64()? as usize;
    let text = std::str::from_utf8(r.take(clen)?).map_err(|_| CerfError::Checkpoint("config is not UTF-8".into()))?;
    let config = CerfConfig::from_json(text)?;
    let count = r.u64()? as usize;
    let raw = r.take(count.checked_mul(T::BYTES).ok_or_else(|| CerfError::Checkpoint("bad length".into()))?)?;
    if r.pos != body.len() {
        return Err(CerfError::Checkpoint("trailing bytes".into()));
    }
    let params = raw.chunks_exact(T::BYTES).map(T::read_le).collect();
    Ok(Checkpoint { params, config, step })
}
