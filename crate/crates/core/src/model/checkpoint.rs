//! Binary checkpoint: `CARDCKPT`, u32 version, u64 header length, JSON header,
//! then every tensor as little-endian f64 in header order.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::arch::{DecisionModel, ModelConfig};
use super::params::Params;
use super::tensor::Tensor;
use super::ModelError;

const MAGIC: &[u8; 8] = b"CARDCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;
const MAX_HEADER: u64 = 1 << 24;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    rows: usize,
    cols: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    step: u64,
    /// Default initial return-to-go for the policy agent.
    target_return: f64,
    tensors: Vec<TensorEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: DecisionModel,
    pub step: u64,
    pub target_return: f64,
}

impl Checkpoint {
    pub fn write_to(&self, w: &mut impl Write) -> Result<(), ModelError> {
        let header = Header {
            config: self.model.cfg.clone(),
            step: self.step,
            target_return: self.target_return,
            tensors: self
                .model
                .params
                .iter()
                .map(|(_, name, t)| TensorEntry { name: name.to_string(), rows: t.rows, cols: t.cols })
                .collect(),
        };
        let json = serde_json::to_vec(&header).map_err(|e| ModelError::Corrupt(e.to_string()))?;
        w.write_all(MAGIC)?;
        w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
        w.write_all(&(json.len() as u64).to_le_bytes())?;
        w.write_all(&json)?;
        for (_, _, t) in self.model.params.iter() {
            let mut buf = Vec::with_capacity(t.data.len() * 8);
            for v in &t.data {
                buf.extend_from_slice(&v.to_le_bytes());
            }
            w.write_all(&buf)?;
        }
        Ok(())
    }

    /// Reads a checkpoint; when `expect` is given the stored config must match it.
    pub fn read_from(r: &mut impl Read, expect: Option<&ModelConfig>) -> Result<Self, ModelError> {
        let corrupt = |m: &str| ModelError::Corrupt(m.to_string());
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(|_| corrupt("file too short"))?;
        if &magic != MAGIC {
            return Err(corrupt("bad magic"));
        }
        let mut b4 = [0u8; 4];
        r.read_exact(&mut b4).map_err(|_| corrupt("file too short"))?;
        let version = u32::from_le_bytes(b4);
        if version != CHECKPOINT_VERSION {
            return Err(ModelError::UnsupportedVersion(version));
        }
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b8).map_err(|_| corrupt("file too short"))?;
        let hlen = u64::from_le_bytes(b8);
        if hlen > MAX_HEADER {
            return Err(corrupt("header length out of range"));
        }
        let mut json = vec![0u8; hlen as usize];
        r.read_exact(&mut json).map_err(|_| corrupt("truncated header"))?;
        let header: Header = serde_json::from_slice(&json).map_err(|e| ModelError::Corrupt(e.to_string()))?;
        if let Some(cfg) = expect {
            if cfg != &header.config {
                return Err(ModelError::ConfigMismatch("stored config differs from the requested one".into()));
            }
        }
        let mut params = Params::new();
        for e in &header.tensors {
            let n = e.rows.checked_mul(e.cols).ok_or_else(|| corrupt("tensor shape overflows"))?;
            let mut raw = vec![0u8; n * 8];
            r.read_exact(&mut raw).map_err(|_| corrupt("truncated tensor data"))?;
            let data = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
            params.add(e.name.clone(), Tensor::from_vec(e.rows, e.cols, data));
        }
        let mut rest = [0u8; 1];
        if r.read(&mut rest)? != 0 {
            return Err(corrupt("trailing bytes"));
        }
        let model = DecisionModel::from_parts(header.config, params)?;
        Ok(Self { model, step: header.step, target_return: header.target_return })
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(&mut f)?;
        f.flush()?;
        Ok(())
    }

    pub fn load(path: &Path, expect: Option<&ModelConfig>) -> Result<Self, ModelError> {
        let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
        Self::read_from(&mut f, expect)
    }
}
