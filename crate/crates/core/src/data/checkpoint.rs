//! Binary checkpoint container.
//!
//! Layout (all integers little-endian):
//! magic `RSEN`, u32 version, u32-length-prefixed UTF-8 config text,
//! u32 tensor count, then per tensor a u32-length-prefixed name, u8 rank,
//! `rank` u32 dims and the raw f32 payload. Biases are stored with rank 1.

use std::io::Write;
use std::path::Path;

use crate::config::KvConfig;
use crate::error::CheckpointError;
use crate::model::{ModelConfig, ParameterStore};
use crate::tensor::{Dims, Tensor};

pub const MAGIC: &[u8; 4] = b"RSEN";
pub const CHECKPOINT_VERSION: u32 = 1;

/// A decoded checkpoint. `meta` holds the full config text, including any
/// non-model keys (for example training progress under `state.*`).
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub params: ParameterStore<f32>,
    pub meta: KvConfig,
}

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&u32::try_from(v).expect("checkpoint field exceeds u32").to_le_bytes());
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    put_u32(out, s.len());
    out.extend_from_slice(s.as_bytes());
}

/// Serializes parameters and config. `meta` entries are written alongside the
/// model keys, which always reflect `cfg`.
pub fn encode_checkpoint(store: &ParameterStore<f32>, cfg: &ModelConfig, meta: Option<&KvConfig>) -> Vec<u8> {
    let mut kv = meta.cloned().unwrap_or_default();
    cfg.write_kv(&mut kv);
    encode_container(&kv, store)
}

/// Serializes an arbitrary named tensor set with its config text.
pub fn encode_container(kv: &KvConfig, store: &ParameterStore<f32>) -> Vec<u8> {
    let mut out = Vec::with_capacity(64 + 4 * store.numel());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    put_str(&mut out, &kv.to_text());
    put_u32(&mut out, store.len());
    for (name, t) in store.iter() {
        put_str(&mut out, name);
        let d = t.dims();
        if name.ends_with("/bias") && d.n == 1 && d.h == 1 && d.w == 1 {
            out.push(1);
            put_u32(&mut out, d.c);
        } else {
            out.push(4);
            for v in d.as_array() {
                put_u32(&mut out, v);
            }
        }
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, context: impl FnOnce() -> String) -> Result<&'a [u8], CheckpointError> {
        if self.bytes.len() - self.pos < n {
            return Err(CheckpointError::Truncated { context: context() });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, context: impl FnOnce() -> String) -> Result<usize, CheckpointError> {
        let b = self.take(4, context)?;
        Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")) as usize)
    }

    fn string(&mut self, context: impl Fn() -> String) -> Result<String, CheckpointError> {
        let len = self.u32(&context)?;
        let b = self.take(len, &context)?;
        String::from_utf8(b.to_vec())
            .map_err(|_| CheckpointError::Malformed(format!("{} is not UTF-8", context())))
    }
}

/// Parses a container without checking tensors against an architecture.
pub fn decode_container(bytes: &[u8]) -> Result<(KvConfig, ParameterStore<f32>), CheckpointError> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4, || "magic".into()).ok() != Some(MAGIC.as_slice()) {
        return Err(CheckpointError::BadMagic);
    }
    let version = r.u32(|| "version".into())? as u32;
    if version != CHECKPOINT_VERSION {
        return Err(CheckpointError::VersionMismatch {
            found: version,
            expected: CHECKPOINT_VERSION,
        });
    }
    let text = r.string(|| "config text".into())?;
    let kv = KvConfig::parse(&text)?;
    let count = r.u32(|| "tensor count".into())?;
    let mut store = ParameterStore::new();
    for i in 0..count {
        let name = r.string(|| format!("name of tensor {i}"))?;
        let rank = r.take(1, || format!("rank of `{name}`"))?[0];
        let dims = match rank {
            1 => Dims::new(1, r.u32(|| format!("dims of `{name}`"))?, 1, 1),
            4 => {
                let mut d = [0usize; 4];
                for v in d.iter_mut() {
                    *v = r.u32(|| format!("dims of `{name}`"))?;
                }
                Dims::from(d)
            }
            _ => {
                return Err(CheckpointError::Malformed(format!(
                    "tensor `{name}` has unsupported rank {rank}"
                )))
            }
        };
        let nbytes = dims
            .numel()
            .checked_mul(4)
            .ok_or_else(|| CheckpointError::Malformed(format!("tensor `{name}` is too large")))?;
        let payload = r.take(nbytes, || format!("payload of `{name}`"))?;
        let data = payload
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
            .collect();
        let t = Tensor::new(dims, data).expect("payload sized from dims");
        if store.insert(name.clone(), t).is_some() {
            return Err(CheckpointError::Malformed(format!("duplicate tensor `{name}`")));
        }
    }
    if r.pos != bytes.len() {
        return Err(CheckpointError::Malformed(format!(
            "{} trailing bytes after the last tensor",
            bytes.len() - r.pos
        )));
    }
    Ok((kv, store))
}

/// Decodes and validates against the architecture recorded in the checkpoint.
pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint, CheckpointError> {
    let (meta, params) = decode_container(bytes)?;
    let config = ModelConfig::from_kv(&meta)?;
    params.validate(&config)?;
    Ok(Checkpoint { config, params, meta })
}

/// Decodes and validates against a caller-supplied architecture.
pub fn decode_checkpoint_for(bytes: &[u8], cfg: &ModelConfig) -> Result<Checkpoint, CheckpointError> {
    let (meta, params) = decode_container(bytes)?;
    params.validate(cfg)?;
    Ok(Checkpoint {
        config: cfg.clone(),
        params,
        meta,
    })
}

/// Writes via a sibling temporary file and a rename, so an existing file at
/// `path` is only replaced by a complete checkpoint.
pub fn save_checkpoint(
    path: &Path,
    store: &ParameterStore<f32>,
    cfg: &ModelConfig,
    meta: Option<&KvConfig>,
) -> Result<(), CheckpointError> {
    let bytes = encode_checkpoint(store, cfg, meta);
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".partial");
    let tmp = std::path::PathBuf::from(tmp);
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(&bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, CheckpointError> {
    decode_checkpoint(&std::fs::read(path)?)
}

pub fn load_checkpoint_for(path: &Path, cfg: &ModelConfig) -> Result<Checkpoint, CheckpointError> {
    decode_checkpoint_for(&std::fs::read(path)?, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::init_params;

    fn small() -> ModelConfig {
        ModelConfig {
            base_channels: 16,
            bottleneck_blocks: 1,
            ..ModelConfig::default()
        }
    }

    #[test]
    fn round_trip_is_bitwise() {
        let cfg = small();
        let mut store = init_params::<f32>(&cfg, 5);
        store.get_mut("encoder/in/conv/bias").unwrap().data_mut()[2] = -0.0;
        let mut meta = KvConfig::default();
        meta.set("state.epoch", 12);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.rsen");
        save_checkpoint(&path, &store, &cfg, Some(&meta)).unwrap();
        let ck = load_checkpoint(&path).unwrap();
        assert_eq!(ck.config, cfg);
        assert_eq!(ck.meta.get::<usize>("state.epoch").unwrap(), Some(12));
        assert_eq!(ck.params.len(), store.len());
        for ((n1, a), (n2, b)) in store.iter().zip(ck.params.iter()) {
            assert_eq!(n1, n2);
            assert_eq!(a.dims(), b.dims());
            let bits = |t: &Tensor<f32>| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(a), bits(b));
        }
    }

    #[test]
    fn header_is_little_endian() {
        let cfg = small();
        let bytes = encode_checkpoint(&init_params(&cfg, 0), &cfg, None);
        assert_eq!(&bytes[..4], b"RSEN");
        assert_eq!(&bytes[4..8], &[1, 0, 0, 0]);
    }

    #[test]
    fn distinct_errors() {
        let cfg = small();
        let bytes = encode_checkpoint(&init_params(&cfg, 0), &cfg, None);
        assert!(matches!(
            decode_checkpoint(&bytes[..bytes.len() - 1]),
            Err(CheckpointError::Truncated { .. })
        ));
        let mut v2 = bytes.clone();
        v2[4] = 2;
        assert!(matches!(
            decode_checkpoint(&v2),
            Err(CheckpointError::VersionMismatch { found: 2, expected: 1 })
        ));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode_checkpoint(&bad), Err(CheckpointError::BadMagic)));
        let mut long = bytes.clone();
        long.push(0);
        assert!(matches!(decode_checkpoint(&long), Err(CheckpointError::Malformed(_))));
        let wide = ModelConfig {
            base_channels: 64,
            ..cfg
        };
        match decode_checkpoint_for(&bytes, &wide) {
            Err(CheckpointError::Mismatch { name, .. }) => assert_eq!(name, "encoder/in/conv/weight"),
            other => panic!("{other:?}"),
        }
    }
}
