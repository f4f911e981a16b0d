//! Binary checkpoint files: trained parameters plus enough context to
//! rebuild the model and audit where the weights came from.
//!
//! Layout (header integers big-endian, element payloads little-endian
//! IEEE-754):
//!
//! ```text
//! "MMRT"                      magic
//! u16                         format version
//! u32 + bytes                 architecture descriptor (UTF-8 JSON)
//! u32 + bytes                 metadata (UTF-8 JSON)
//! u32                         array count
//! per array, sorted by name:
//!   u32 + bytes               parameter name (UTF-8)
//!   u8                        precision tag (0 = binary32, 1 = binary64)
//!   u8                        rank
//!   rank x u32                extents
//!   extents product x elem    payload
//! ```
//!
//! Susceptibility flags are not stored; they are a property of the
//! architecture and are reconstructed from its parameter specs on load.
//! `decode(encode(c))` then `encode` again is bit-identical, which the
//! determinism tests rely on.

use mmrt_core::models::ParamSpec;
use mmrt_core::{Architecture, ParameterSet, Precision, Real, Tensor};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::path::Path;
use thiserror::Error;

pub const MAGIC: &[u8; 4] = b"MMRT";
pub const VERSION: u16 = 1;

#[derive(Debug, Error, PartialEq)]
pub enum CheckpointError {
    #[error("bad checkpoint magic {0:02x?}, expected {1:02x?}")]
    BadMagic([u8; 4], [u8; 4]),
    #[error("unsupported checkpoint version {0}, this build reads {VERSION}")]
    UnsupportedVersion(u16),
    #[error("truncated checkpoint: needed {needed} more bytes, got {got}")]
    Truncated { needed: usize, got: usize },
    #[error("{0} trailing bytes after the last array")]
    Trailing(usize),
    #[error("checkpoint field is not valid UTF-8")]
    Utf8,
    #[error("checkpoint descriptor/metadata JSON: {0}")]
    Json(String),
    #[error("unknown precision tag {0}")]
    UnknownPrecision(u8),
    #[error("checkpoint stores {stored:?} elements but {requested:?} was requested")]
    PrecisionMismatch {
        stored: Precision,
        requested: Precision,
    },
    #[error("checkpoint array `{0}` is not a parameter of the stored architecture")]
    UnknownParameter(String),
    #[error("checkpoint is missing parameter `{0}`")]
    MissingParameter(String),
    #[error("parameter `{name}` has shape {got:?}, architecture expects {expected:?}")]
    ShapeMismatch {
        name: String,
        got: Vec<usize>,
        expected: Vec<usize>,
    },
    #[error("io: {0}")]
    Io(String),
}

type Result<T> = std::result::Result<T, CheckpointError>;

/// Provenance stored alongside the weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    /// Hash of the experiment config that produced this checkpoint.
    pub config_hash: String,
    /// Training method name (`standard`, `beta`, ...).
    pub method: String,
    /// Master seed of the run.
    pub seed: u64,
    /// Epoch whose validation accuracy was best (the stored weights).
    pub epoch: usize,
    /// Validation accuracy at that epoch.
    pub val_accuracy: f64,
}

/// A trained model ready to save or evaluate.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint<T> {
    pub architecture: Architecture,
    pub meta: CheckpointMeta,
    pub params: ParameterSet<T>,
}

fn precision_tag(p: Precision) -> u8 {
    match p {
        Precision::Binary32 => 0,
        Precision::Binary64 => 1,
    }
}

fn push_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&u32::try_from(v).expect("length fits u32").to_be_bytes());
}

fn push_str(out: &mut Vec<u8>, s: &str) {
    push_u32(out, s.len());
    out.extend_from_slice(s.as_bytes());
}

/// Serialise a checkpoint to its byte form.
pub fn encode<T: Real>(ckpt: &Checkpoint<T>) -> Result<Vec<u8>> {
    let descriptor = serde_json::to_string(&ckpt.architecture)
        .map_err(|e| CheckpointError::Json(e.to_string()))?;
    let metadata =
        serde_json::to_string(&ckpt.meta).map_err(|e| CheckpointError::Json(e.to_string()))?;
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_be_bytes());
    push_str(&mut out, &descriptor);
    push_str(&mut out, &metadata);
    push_u32(&mut out, ckpt.params.len());
    for (name, param) in ckpt.params.iter() {
        push_str(&mut out, name);
        out.push(precision_tag(T::PRECISION));
        let shape = param.value.shape();
        out.push(u8::try_from(shape.len()).expect("rank fits u8"));
        for &extent in shape {
            push_u32(&mut out, extent);
        }
        match T::PRECISION {
            Precision::Binary32 => {
                for v in param.value.data() {
                    out.extend_from_slice(&(Real::to_f64(*v) as f32).to_le_bytes());
                }
            }
            Precision::Binary64 => {
                for v in param.value.data() {
                    out.extend_from_slice(&Real::to_f64(*v).to_le_bytes());
                }
            }
        }
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).ok_or(CheckpointError::Truncated {
            needed: n,
            got: 0,
        })?;
        if end > self.bytes.len() {
            return Err(CheckpointError::Truncated {
                needed: n,
                got: self.bytes.len() - self.pos,
            });
        }
        let slice = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(slice)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16_be(&mut self) -> Result<u16> {
        let b = self.take(2)?;
        Ok(u16::from_be_bytes([b[0], b[1]]))
    }

    fn u32_be(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn string(&mut self) -> Result<String> {
        let len = self.u32_be()? as usize;
        let bytes = self.take(len)?;
        String::from_utf8(bytes.to_vec()).map_err(|_| CheckpointError::Utf8)
    }
}

/// Parse a checkpoint from bytes, validating the stored arrays against the
/// stored architecture's parameter specs.
pub fn decode<T: Real>(bytes: &[u8]) -> Result<Checkpoint<T>> {
    let mut r = Reader { bytes, pos: 0 };
    let magic = r.take(4)?;
    if magic != MAGIC {
        return Err(CheckpointError::BadMagic(
            [magic[0], magic[1], magic[2], magic[3]],
            *MAGIC,
        ));
    }
    let version = r.u16_be()?;
    if version != VERSION {
        return Err(CheckpointError::UnsupportedVersion(version));
    }
    let architecture: Architecture = serde_json::from_str(&r.string()?)
        .map_err(|e| CheckpointError::Json(e.to_string()))?;
    let meta: CheckpointMeta =
        serde_json::from_str(&r.string()?).map_err(|e| CheckpointError::Json(e.to_string()))?;
    let count = r.u32_be()? as usize;

    let specs: BTreeMap<String, ParamSpec> = architecture
        .param_specs()
        .into_iter()
        .map(|s| (s.name.clone(), s))
        .collect();

    let mut params = ParameterSet::new();
    for _ in 0..count {
        let name = r.string()?;
        let tag = r.u8()?;
        let stored = Precision::from_tag(tag).ok_or(CheckpointError::UnknownPrecision(tag))?;
        if stored != T::PRECISION {
            return Err(CheckpointError::PrecisionMismatch {
                stored,
                requested: T::PRECISION,
            });
        }
        let rank = r.u8()? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.u32_be()? as usize);
        }
        let n: usize = shape.iter().product();
        let data: Vec<T> = match T::PRECISION {
            Precision::Binary32 => {
                let raw = r.take(n * 4)?;
                raw.chunks_exact(4)
                    .map(|c| T::from_f64(f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64))
                    .collect()
            }
            Precision::Binary64 => {
                let raw = r.take(n * 8)?;
                raw.chunks_exact(8)
                    .map(|c| {
                        T::from_f64(f64::from_le_bytes([
                            c[0], c[1], c[2], c[3], c[4], c[5], c[6], c[7],
                        ]))
                    })
                    .collect()
            }
        };
        let spec = specs
            .get(&name)
            .ok_or_else(|| CheckpointError::UnknownParameter(name.clone()))?;
        if spec.shape != shape {
            return Err(CheckpointError::ShapeMismatch {
                name,
                got: shape,
                expected: spec.shape.clone(),
            });
        }
        let tensor =
            Tensor::from_vec(&shape, data).expect("payload length equals the shape product");
        params.insert(&name, tensor, spec.susceptible);
    }
    for name in specs.keys() {
        if params.value(name).is_err() {
            return Err(CheckpointError::MissingParameter(name.clone()));
        }
    }
    if r.pos != bytes.len() {
        return Err(CheckpointError::Trailing(bytes.len() - r.pos));
    }
    Ok(Checkpoint {
        architecture,
        meta,
        params,
    })
}

/// Write a checkpoint atomically (temp file then rename).
pub fn save_checkpoint<T: Real>(path: &Path, ckpt: &Checkpoint<T>) -> Result<()> {
    let bytes = encode(ckpt)?;
    crate::output::atomic_write(path, &bytes).map_err(|e| CheckpointError::Io(e.to_string()))
}

/// Read a checkpoint written by [`save_checkpoint`].
pub fn load_checkpoint<T: Real>(path: &Path) -> Result<Checkpoint<T>> {
    let bytes = std::fs::read(path).map_err(|e| {
        CheckpointError::Io(format!("reading {}: {e}", path.display()))
    })?;
    decode(&bytes)
}

/// Hex SHA-256 of the serialised checkpoint; used by the determinism checks.
pub fn checkpoint_hash<T: Real>(ckpt: &Checkpoint<T>) -> Result<String> {
    let bytes = encode(ckpt)?;
    let digest = Sha256::digest(&bytes);
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use mmrt_core::{MlpConfig, RngStream, SrnnConfig};

    fn sample_checkpoint() -> Checkpoint<f64> {
        let architecture = Architecture::Mlp(MlpConfig::new(&[3, 4, 2]));
        let params = architecture.init_params::<f64>(&mut RngStream::new(11, 0));
        Checkpoint {
            architecture,
            meta: CheckpointMeta {
                config_hash: "ab12cd34ef56ab78".into(),
                method: "beta".into(),
                seed: 7,
                epoch: 3,
                val_accuracy: 0.8215,
            },
            params,
        }
    }

    #[test]
    fn encode_decode_round_trip_is_bit_identical() {
        let ckpt = sample_checkpoint();
        let bytes = encode(&ckpt).unwrap();
        let back = decode::<f64>(&bytes).unwrap();
        assert_eq!(back.meta, ckpt.meta);
        assert_eq!(back.architecture, ckpt.architecture);
        let again = encode(&back).unwrap();
        assert_eq!(again, bytes, "re-encoding must reproduce every byte");
    }

    #[test]
    fn susceptibility_comes_back_from_the_architecture() {
        let architecture = Architecture::Srnn(SrnnConfig {
            input_dim: 2,
            hidden: 3,
            classes: 2,
            n_steps: 4,
            ..SrnnConfig::default()
        });
        let params = architecture.init_params::<f64>(&mut RngStream::new(3, 0));
        let ckpt = Checkpoint {
            architecture,
            meta: sample_checkpoint().meta,
            params,
        };
        let back = decode::<f64>(&encode(&ckpt).unwrap()).unwrap();
        for spec in back.architecture.param_specs() {
            assert_eq!(
                back.params.get(&spec.name).unwrap().susceptible,
                spec.susceptible,
                "susceptibility of {}",
                spec.name
            );
        }
    }

    #[test]
    fn bad_magic_and_future_versions_are_rejected() {
        let mut bytes = encode(&sample_checkpoint()).unwrap();
        let mut flipped = bytes.clone();
        flipped[0] ^= 0xff;
        assert!(matches!(
            decode::<f64>(&flipped),
            Err(CheckpointError::BadMagic(..))
        ));
        bytes[4..6].copy_from_slice(&(VERSION + 1).to_be_bytes());
        assert_eq!(
            decode::<f64>(&bytes),
            Err(CheckpointError::UnsupportedVersion(VERSION + 1))
        );
    }

    #[test]
    fn truncated_and_padded_files_are_rejected() {
        let bytes = encode(&sample_checkpoint()).unwrap();
        let cut = &bytes[..bytes.len() - 3];
        assert!(matches!(
            decode::<f64>(cut),
            Err(CheckpointError::Truncated { .. })
        ));
        let mut padded = bytes.clone();
        padded.extend_from_slice(&[0, 0]);
        assert_eq!(decode::<f64>(&padded), Err(CheckpointError::Trailing(2)));
    }

    #[test]
    fn precision_tag_mismatch_is_reported() {
        let bytes = encode(&sample_checkpoint()).unwrap();
        assert!(matches!(
            decode::<f32>(&bytes),
            Err(CheckpointError::PrecisionMismatch { .. })
        ));
    }

    #[test]
    fn save_and_load_cross_the_filesystem_unchanged() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let ckpt = sample_checkpoint();
        save_checkpoint(&path, &ckpt).unwrap();
        let back = load_checkpoint::<f64>(&path).unwrap();
        assert_eq!(checkpoint_hash(&back).unwrap(), checkpoint_hash(&ckpt).unwrap());
    }

    #[test]
    fn hash_changes_when_a_weight_changes() {
        let ckpt = sample_checkpoint();
        let mut other = ckpt.clone();
        for (_, p) in other.params.iter_mut() {
            p.value.data_mut()[0] += 1e-9;
            break;
        }
        assert_ne!(
            checkpoint_hash(&ckpt).unwrap(),
            checkpoint_hash(&other).unwrap()
        );
    }
}
