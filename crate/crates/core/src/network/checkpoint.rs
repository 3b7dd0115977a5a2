//! Single-file checkpoint.
//!
//! Layout: 8-byte magic, `u32` version, `u64` header length, JSON header (model
//! configuration plus the ordered list of array names and shapes), the arrays as
//! little-endian `f32`, and finally the SHA-256 of everything before it.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Model, ModelConfig};
use crate::error::{Error, Result};
use crate::nn::Tensor;

const MAGIC: &[u8; 8] = b"SERACKPT";
pub const CHECKPOINT_VERSION: u32 = 1;
const DIGEST_LEN: usize = 32;

#[derive(Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    arrays: Vec<ArrayEntry>,
}

#[derive(Serialize, Deserialize)]
struct ArrayEntry {
    name: String,
    shape: Vec<usize>,
}

pub fn checkpoint_to_bytes(model: &Model<f32>) -> Vec<u8> {
    let header = Header {
        config: model.config().clone(),
        arrays: model
            .params()
            .iter()
            .map(|(_, name, t)| ArrayEntry { name: name.to_string(), shape: t.shape().to_vec() })
            .collect(),
    };
    let header = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::with_capacity(20 + header.len() + 4 * model.num_parameters() + DIGEST_LEN);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    for (_, _, t) in model.params().iter() {
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    out
}

pub fn checkpoint_from_bytes(bytes: &[u8], origin: &Path) -> Result<Model<f32>> {
    let corrupt = |reason: String| Error::Corrupt { path: origin.to_path_buf(), reason };
    if bytes.len() < MAGIC.len() + 12 + DIGEST_LEN || &bytes[..MAGIC.len()] != MAGIC {
        return Err(corrupt("not a checkpoint file".into()));
    }
    let (body, digest) = bytes.split_at(bytes.len() - DIGEST_LEN);
    if Sha256::digest(body).as_slice() != digest {
        return Err(corrupt("checksum mismatch".into()));
    }
    let version = u32::from_le_bytes(body[8..12].try_into().expect("4 bytes"));
    if version != CHECKPOINT_VERSION {
        return Err(corrupt(format!("unsupported version {version}")));
    }
    let header_len = u64::from_le_bytes(body[12..20].try_into().expect("8 bytes")) as usize;
    let header_end = 20usize.checked_add(header_len).filter(|&e| e <= body.len());
    let header_end = header_end.ok_or_else(|| corrupt("truncated header".into()))?;
    let header: Header =
        serde_json::from_slice(&body[20..header_end]).map_err(|e| corrupt(format!("bad header: {e}")))?;

    let mut model = Model::<f32>::new(header.config).map_err(|e| corrupt(format!("bad configuration: {e}")))?;
    let expected: Vec<(String, Vec<usize>)> =
        model.params().iter().map(|(_, n, t)| (n.to_string(), t.shape().to_vec())).collect();
    if expected.len() != header.arrays.len() {
        return Err(corrupt(format!("expected {} arrays, found {}", expected.len(), header.arrays.len())));
    }
    let mut data = &body[header_end..];
    let mut params = model.params().clone();
    for ((name, shape), entry) in expected.iter().zip(&header.arrays) {
        if *name != entry.name || *shape != entry.shape {
            return Err(corrupt(format!("array {} {:?} where {name} {shape:?} was expected", entry.name, entry.shape)));
        }
        let n: usize = shape.iter().product();
        if data.len() < 4 * n {
            return Err(corrupt(format!("array {name} is truncated")));
        }
        let values = data[..4 * n].chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect();
        data = &data[4 * n..];
        let id = params.id_of(name).expect("name taken from this store");
        *params.get_mut(id) = Tensor::from_vec(shape, values);
    }
    if !data.is_empty() {
        return Err(corrupt(format!("{} trailing bytes", data.len())));
    }
    model.set_params(params)?;
    Ok(model)
}

pub fn save_checkpoint(model: &Model<f32>, path: &Path) -> Result<()> {
    std::fs::write(path, checkpoint_to_bytes(model)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Model<f32>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    checkpoint_from_bytes(&bytes, path)
}
