//! Checkpoint files.
//!
//! Layout (little-endian): magic `ABCK`, format version `u32`, header length
//! `u32`, JSON [`CheckpointHeader`], header CRC32, then every parameter's
//! values in header order as `f64`, followed by the CRC32 of that payload.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use abn_numerics::{ParamStore, Tensor};
use serde::{Deserialize, Serialize};

use crate::config::{ModelConfig, VariantConfig};
use crate::error::{ModelError, Result};
use crate::network::Model;

pub const MAGIC: &[u8; 4] = b"ABCK";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

/// Seeds and progress that produced a set of weights.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lineage {
    pub init_seed: u64,
    pub train_seed: Option<u64>,
    pub data_seed: Option<u64>,
    pub steps: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub variant: VariantConfig,
    pub config: ModelConfig,
    pub lineage: Lineage,
    pub dtype: String,
    pub params: Vec<ParamEntry>,
}

pub fn save_checkpoint(model: &Model, lineage: &Lineage, path: &Path) -> Result<()> {
    let store = model.params();
    let header = CheckpointHeader {
        variant: model.variant(),
        config: model.config().clone(),
        lineage: lineage.clone(),
        dtype: "f64".into(),
        params: store
            .iter()
            .map(|(name, t)| ParamEntry {
                name: name.to_string(),
                shape: t.shape().to_vec(),
            })
            .collect(),
    };
    let json = serde_json::to_vec_pretty(&header).map_err(|e| ModelError::Checkpoint(e.to_string()))?;
    let mut payload = Vec::with_capacity(8 * store.scalar_count());
    for (_, t) in store.iter() {
        for v in t.data() {
            payload.extend_from_slice(&v.to_le_bytes());
        }
    }
    let mut out = BufWriter::new(File::create(path)?);
    out.write_all(MAGIC)?;
    out.write_all(&FORMAT_VERSION.to_le_bytes())?;
    out.write_all(&(json.len() as u32).to_le_bytes())?;
    out.write_all(&json)?;
    out.write_all(&crc32fast::hash(&json).to_le_bytes())?;
    out.write_all(&payload)?;
    out.write_all(&crc32fast::hash(&payload).to_le_bytes())?;
    out.flush()?;
    Ok(())
}

fn read_block(r: &mut impl Read, n: usize, what: &str) -> Result<Vec<u8>> {
    let mut buf = vec![0u8; n];
    r.read_exact(&mut buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => ModelError::Checkpoint(format!("truncated {what}")),
        _ => ModelError::Io(e),
    })?;
    Ok(buf)
}

fn read_u32(r: &mut impl Read, what: &str) -> Result<u32> {
    Ok(u32::from_le_bytes(read_block(r, 4, what)?.try_into().unwrap()))
}

pub fn read_checkpoint_header(path: &Path) -> Result<CheckpointHeader> {
    let mut r = BufReader::new(File::open(path)?);
    parse_header(&mut r)
}

fn parse_header(r: &mut impl Read) -> Result<CheckpointHeader> {
    if read_block(r, 4, "magic")? != MAGIC {
        return Err(ModelError::Checkpoint("not a checkpoint file".into()));
    }
    let version = read_u32(r, "version")?;
    if version != FORMAT_VERSION {
        return Err(ModelError::Checkpoint(format!(
            "format version {version} is not supported (expected {FORMAT_VERSION})"
        )));
    }
    let len = read_u32(r, "header length")? as usize;
    let json = read_block(r, len, "header")?;
    if read_u32(r, "header checksum")? != crc32fast::hash(&json) {
        return Err(ModelError::Checksum("header".into()));
    }
    let header: CheckpointHeader =
        serde_json::from_slice(&json).map_err(|e| ModelError::Checkpoint(e.to_string()))?;
    if header.dtype != "f64" {
        return Err(ModelError::Checkpoint(format!("unsupported dtype {:?}", header.dtype)));
    }
    Ok(header)
}

/// Loads weights and checks every declared shape against the variant.
pub fn load_checkpoint(path: &Path) -> Result<(Model, CheckpointHeader)> {
    let mut r = BufReader::new(File::open(path)?);
    let header = parse_header(&mut r)?;
    let total: usize = header.params.iter().map(|p| p.shape.iter().product::<usize>()).sum();
    let payload = read_block(&mut r, 8 * total, "parameter payload")?;
    if read_u32(&mut r, "payload checksum")? != crc32fast::hash(&payload) {
        return Err(ModelError::Checksum("parameter payload".into()));
    }
    let mut store = ParamStore::new();
    let mut values = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()));
    for p in &header.params {
        let n = p.shape.iter().product();
        let data: Vec<f64> = values.by_ref().take(n).collect();
        store.insert(p.name.clone(), Tensor::new(p.shape.clone(), data)?)?;
    }
    let model = Model::from_store(header.config.clone(), header.variant, store)?;
    Ok((model, header))
}
