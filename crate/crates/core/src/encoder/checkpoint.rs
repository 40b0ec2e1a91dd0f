//! Versioned binary checkpoints.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! offset  size  field
//! 0       8     magic "CERTCKPT"
//! 8       4     u32 format version (currently 1)
//! 12      8     u64 header length H in bytes
//! 20      H     UTF-8 JSON header (see `Header`)
//! 20+H    ...   tensor payloads, in header order, each numel × f64 LE
//! ```
//!
//! The JSON header carries the encoder configuration, the vocabulary
//! fingerprint, run metadata, and the ordered tensor index
//! (`{"name": ..., "shape": [...]}` per entry).

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::EncoderConfig;
use crate::error::{CertError, Result};
use crate::numeric::{ParamSet, Tensor};
use crate::text::{TaskSpec, Vocabulary};

pub const MAGIC: &[u8; 8] = b"CERTCKPT";
pub const FORMAT_VERSION: u32 = 1;

/// Provenance recorded alongside the weights.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    /// Training stages applied so far, oldest first (e.g. `["mlm", "cssl"]`).
    pub stages: Vec<String>,
    pub seed: u64,
    /// Task the `head.*` parameters were trained for, if any.
    pub task: Option<TaskSpec>,
    /// Parameter-name prefixes that downstream stages should drop.
    pub discardable: Vec<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: EncoderConfig,
    pub vocab_fingerprint: String,
    pub meta: CheckpointMeta,
    pub params: ParamSet,
}

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    config: EncoderConfig,
    vocab_fingerprint: String,
    meta: CheckpointMeta,
    tensors: Vec<TensorEntry>,
}

impl Checkpoint {
    pub fn new(config: EncoderConfig, vocab: &Vocabulary, meta: CheckpointMeta, params: ParamSet) -> Self {
        Checkpoint {
            config,
            vocab_fingerprint: vocab.fingerprint(),
            meta,
            params,
        }
    }

    /// Whether any training stage has touched these weights.
    pub fn is_pretrained(&self) -> bool {
        !self.meta.stages.is_empty()
    }

    pub fn check_vocab(&self, vocab: &Vocabulary) -> Result<()> {
        if vocab.fingerprint() != self.vocab_fingerprint {
            return Err(CertError::Checkpoint(
                "vocabulary does not match the one the checkpoint was trained with".into(),
            ));
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = Header {
            config: self.config.clone(),
            vocab_fingerprint: self.vocab_fingerprint.clone(),
            meta: self.meta.clone(),
            tensors: self
                .params
                .iter()
                .map(|(name, t)| TensorEntry {
                    name: name.to_string(),
                    shape: t.shape().to_vec(),
                })
                .collect(),
        };
        let json = serde_json::to_vec(&header).map_err(|e| CertError::Checkpoint(format!("header encoding: {e}")))?;
        let mut out = Vec::with_capacity(20 + json.len() + 8 * self.params.num_scalars());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for (_, t) in self.params.iter() {
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |msg: &str| CertError::Checkpoint(msg.to_string());
        if bytes.len() < 20 || &bytes[..8] != MAGIC {
            return Err(bad("not a checkpoint file (bad magic)"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
        if version != FORMAT_VERSION {
            return Err(CertError::Checkpoint(format!(
                "unsupported checkpoint version {version}"
            )));
        }
        let hlen = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
        let body = bytes.get(20..20 + hlen).ok_or_else(|| bad("truncated header"))?;
        let header: Header =
            serde_json::from_slice(body).map_err(|e| CertError::Checkpoint(format!("header decoding: {e}")))?;
        let mut offset = 20 + hlen;
        let mut params = ParamSet::new();
        for entry in header.tensors {
            let numel: usize = entry.shape.iter().product();
            let raw = bytes
                .get(offset..offset + 8 * numel)
                .ok_or_else(|| bad("truncated tensor payload"))?;
            let data = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            params.insert(entry.name, Tensor::new(entry.shape, data)?);
            offset += 8 * numel;
        }
        if offset != bytes.len() {
            return Err(bad("trailing bytes after tensor payloads"));
        }
        header.config.validate()?;
        Ok(Checkpoint {
            config: header.config,
            vocab_fingerprint: header.vocab_fingerprint,
            meta: header.meta,
            params,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = self.to_bytes()?;
        let mut f = fs::File::create(path).map_err(|e| CertError::io(path, e))?;
        f.write_all(&bytes).map_err(|e| CertError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| CertError::io(path, e))?;
        Checkpoint::from_bytes(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::init_encoder;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample() -> Checkpoint {
        let cfg = EncoderConfig {
            vocab_size: 12,
            d_model: 4,
            n_heads: 2,
            n_layers: 1,
            d_ff: 8,
            max_seq_len: 6,
            ..EncoderConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let params = init_encoder(&cfg, &mut rng).unwrap();
        let vocab = Vocabulary::specials_only();
        Checkpoint::new(
            cfg,
            &vocab,
            CheckpointMeta {
                stages: vec!["mlm".into()],
                seed: 7,
                task: None,
                discardable: vec![],
            },
            params,
        )
    }

    #[test]
    fn bytes_round_trip_exactly() {
        let ck = sample();
        let bytes = ck.to_bytes().unwrap();
        assert_eq!(&bytes[..8], MAGIC);
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(ck, back);
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let bytes = sample().to_bytes().unwrap();
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 3]).is_err());
        let mut wrong = bytes.clone();
        wrong[0] = b'X';
        assert!(Checkpoint::from_bytes(&wrong).is_err());
        let mut v2 = bytes;
        v2[8] = 2;
        assert!(Checkpoint::from_bytes(&v2)
            .unwrap_err()
            .to_string()
            .contains("version 2"));
    }

    #[test]
    fn vocab_mismatch_is_detected() {
        let ck = sample();
        let other = Vocabulary::build(&["hello"], 1, &crate::text::BasicTokenizer).unwrap();
        assert!(ck.check_vocab(&Vocabulary::specials_only()).is_ok());
        assert!(ck.check_vocab(&other).is_err());
    }
}
