//! Binary checkpoint container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic        8 bytes   b"PRVCKPT1"
//! header_len   u64
//! header       header_len bytes of UTF-8 JSON:
//!              {"format_version":1,"dims":{..},"lineage":{..},
//!               "params":[{"name":..,"shape":[..]},..]}
//! payload      every parameter in header order, row-major f64 LE
//! digest       32 bytes  SHA-256 of everything above
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{ModelDims, ModelParams, GROUP_NAMES};
use crate::error::{Error, Result};
use crate::privatizer::GroupShape;

const MAGIC: &[u8; 8] = b"PRVCKPT1";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub dims: ModelDims,
    pub params: ModelParams,
    /// Seed lineage and run provenance (master seed, stream names, epoch...).
    pub lineage: BTreeMap<String, String>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    format_version: u32,
    dims: ModelDims,
    lineage: BTreeMap<String, String>,
    params: Vec<GroupShape>,
}

pub fn write_checkpoint<W: Write>(ckpt: &Checkpoint, mut out: W) -> Result<()> {
    if !ckpt.params.dims_match(&ckpt.dims) {
        return Err(Error::Checkpoint("parameters do not match dims".into()));
    }
    let header = Header {
        format_version: FORMAT_VERSION,
        dims: ckpt.dims,
        lineage: ckpt.lineage.clone(),
        params: ckpt.dims.group_spec().groups().to_vec(),
    };
    let header_bytes = serde_json::to_vec(&header)?;
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&(header_bytes.len() as u64).to_le_bytes());
    buf.extend_from_slice(&header_bytes);
    for block in ckpt.params.blocks() {
        for x in block {
            buf.extend_from_slice(&x.to_le_bytes());
        }
    }
    let digest = Sha256::digest(&buf);
    buf.extend_from_slice(&digest);
    out.write_all(&buf)?;
    Ok(())
}

pub fn read_checkpoint<R: Read>(mut input: R) -> Result<Checkpoint> {
    let mut buf = Vec::new();
    input.read_to_end(&mut buf)?;
    if buf.len() < MAGIC.len() + 8 + 32 || &buf[..8] != MAGIC {
        return Err(Error::Checkpoint("not a privcode checkpoint".into()));
    }
    let (body, digest) = buf.split_at(buf.len() - 32);
    if Sha256::digest(body).as_slice() != digest {
        return Err(Error::Checkpoint("digest mismatch".into()));
    }
    let header_len = u64::from_le_bytes(body[8..16].try_into().expect("8 bytes")) as usize;
    let header_end = 16usize
        .checked_add(header_len)
        .filter(|&e| e <= body.len())
        .ok_or_else(|| Error::Checkpoint("truncated header".into()))?;
    let header: Header = serde_json::from_slice(&body[16..header_end])?;
    if header.format_version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported format version {}",
            header.format_version
        )));
    }
    header.dims.validate()?;
    let expected = header.dims.group_spec();
    if header.params.as_slice() != expected.groups() {
        return Err(Error::Checkpoint("parameter table does not match dims".into()));
    }
    let mut params = ModelParams::zeros(&header.dims);
    let mut payload = body[header_end..].chunks_exact(8);
    for (block, name) in params.blocks_mut().into_iter().zip(GROUP_NAMES) {
        for x in block.iter_mut() {
            let bytes = payload
                .next()
                .ok_or_else(|| Error::Checkpoint(format!("payload ends inside `{name}`")))?;
            *x = f64::from_le_bytes(bytes.try_into().expect("8 bytes"));
        }
    }
    if payload.next().is_some() || !payload.remainder().is_empty() {
        return Err(Error::Checkpoint("trailing payload bytes".into()));
    }
    Ok(Checkpoint {
        dims: header.dims,
        params,
        lineage: header.lineage,
    })
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    write_checkpoint(ckpt, &mut buf)?;
    fs::write(path, buf)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    read_checkpoint(fs::File::open(path)?)
}
