//! Versioned binary checkpoints.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! 8 bytes   magic "ENTNETCK"
//! u32       format version (1)
//! u64       header length in bytes
//! header    UTF-8 JSON: {"model": ModelConfig, "vocabulary": [token, ...],
//!           "params": [{"name", "shape"}, ...], "meta": {...}}
//! payload   for each entry of "params" in order, its values as row-major f32
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::encoding::Vocabulary;
use crate::error::{Error, Result};
use crate::model::{EntNet, ModelConfig};
use crate::numerics::{ParamStore, Tensor};

pub const MAGIC: &[u8; 8] = b"ENTNETCK";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ParamEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    model: ModelConfig,
    vocabulary: Vec<String>,
    params: Vec<ParamEntry>,
    meta: serde_json::Value,
}

/// A model with its vocabulary and free-form metadata (training
/// hyperparameters, seed, metrics).
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: EntNet,
    pub vocab: Vocabulary,
    pub meta: serde_json::Value,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = Header {
            model: self.model.config.clone(),
            vocabulary: self.vocab.tokens().to_vec(),
            params: self
                .model
                .params
                .iter()
                .map(|p| ParamEntry { name: p.name.clone(), shape: p.value.shape().to_vec() })
                .collect(),
            meta: self.meta.clone(),
        };
        let json = serde_json::to_vec(&header)?;
        let mut out = Vec::with_capacity(20 + json.len() + 4 * self.model.params.scalar_count());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for p in self.model.params.iter() {
            for &x in p.value.data() {
                out.extend_from_slice(&(x as f32).to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::Checkpoint(m.to_string());
        if bytes.len() < 20 || &bytes[..8] != MAGIC {
            return Err(bad("not a checkpoint file"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
        if version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let len = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes"));
        let end = usize::try_from(len).ok().and_then(|l| l.checked_add(20)).filter(|&e| e <= bytes.len());
        let end = end.ok_or_else(|| bad("truncated header"))?;
        let header: Header = serde_json::from_slice(&bytes[20..end])?;

        let mut payload = bytes[end..].chunks_exact(4);
        let mut params = ParamStore::new();
        for entry in &header.params {
            let n: usize = entry.shape.iter().product();
            let data: Vec<f64> = payload
                .by_ref()
                .take(n)
                .map(|c| f64::from(f32::from_le_bytes(c.try_into().expect("4 bytes"))))
                .collect();
            if data.len() != n {
                return Err(bad("truncated parameter data"));
            }
            params.add(entry.name.clone(), Tensor::new(entry.shape.clone(), data)?);
        }
        if payload.next().is_some() || !payload.remainder().is_empty() {
            return Err(bad("trailing bytes after parameters"));
        }
        let mut vocab = Vocabulary::default();
        for (i, t) in header.vocabulary.iter().enumerate() {
            if vocab.insert(t) != i {
                return Err(bad("vocabulary entries must be unique and start with the null token"));
            }
        }
        if vocab.len() != header.model.vocab_size {
            return Err(bad("vocabulary size does not match the model"));
        }
        let model = EntNet::from_params(header.model, params)?;
        Ok(Self { model, vocab, meta: header.meta })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path)
            .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
        Self::from_bytes(&bytes)
    }
}
