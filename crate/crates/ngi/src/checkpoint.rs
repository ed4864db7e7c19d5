//! Checkpoint files: a flat list of named f32 tensors.
//!
//! Layout (all integers u32 little-endian): magic `NGI1`, format version,
//! tensor count, then per tensor the name length and UTF-8 name, rank, dims
//! and raw f32 values; a CRC32 of everything before it closes the file.
//! Non-tensor state (configs, counters) is stored bit-cast in `meta.*`
//! tensors so the format stays a pure tensor list.
use std::path::Path;

use ngi_core::network::{ModelConfig, Network};
use ngi_core::numerics::{AdamState, ParamStore};
use ngi_core::objective::FrozenFeatureExtractor;
use ngi_core::trainer::{TrainConfig, TrainState};

use crate::fsutil::write_atomic;

pub const MAGIC: &[u8; 4] = b"NGI1";
pub const VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a checkpoint (bad magic {0:?})")]
    BadMagic([u8; 4]),
    #[error("unsupported checkpoint version {found} (expected {VERSION})")]
    Version { found: u32 },
    #[error("checkpoint is truncated")]
    Truncated,
    #[error("checkpoint checksum mismatch (stored {stored:08x}, computed {computed:08x})")]
    Checksum { stored: u32, computed: u32 },
    #[error("malformed checkpoint: {0}")]
    Malformed(String),
}

/// One named tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct TensorRecord {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

pub fn encode(records: &[TensorRecord]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    let put = |out: &mut Vec<u8>, v: u32| out.extend_from_slice(&v.to_le_bytes());
    put(&mut out, VERSION);
    put(&mut out, records.len() as u32);
    for r in records {
        put(&mut out, r.name.len() as u32);
        out.extend_from_slice(r.name.as_bytes());
        put(&mut out, r.shape.len() as u32);
        for &d in &r.shape {
            put(&mut out, d as u32);
        }
        for v in &r.data {
            out.extend_from_slice(&v.to_bits().to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&out);
    put(&mut out, crc);
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8], CheckpointError> {
        let end = self.pos.checked_add(n).ok_or(CheckpointError::Truncated)?;
        let s = self.bytes.get(self.pos..end).ok_or(CheckpointError::Truncated)?;
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

pub fn decode(bytes: &[u8]) -> Result<Vec<TensorRecord>, CheckpointError> {
    let mut magic = [0u8; 4];
    let head = bytes.get(..4).ok_or(CheckpointError::Truncated)?;
    magic.copy_from_slice(head);
    if &magic != MAGIC {
        return Err(CheckpointError::BadMagic(magic));
    }
    let mut r = Reader { bytes, pos: 4 };
    let version = r.u32()?;
    if version != VERSION {
        return Err(CheckpointError::Version { found: version });
    }
    let count = r.u32()? as usize;
    let mut records = Vec::new();
    for _ in 0..count {
        let len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(len)?)
            .map_err(|_| CheckpointError::Malformed("tensor name is not UTF-8".into()))?
            .to_owned();
        let rank = r.u32()? as usize;
        let mut shape = Vec::with_capacity(rank.min(8));
        for _ in 0..rank {
            shape.push(r.u32()? as usize);
        }
        let n = shape
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .and_then(|n| n.checked_mul(4))
            .ok_or(CheckpointError::Truncated)?;
        let data = r
            .take(n)?
            .chunks_exact(4)
            .map(|c| f32::from_bits(u32::from_le_bytes([c[0], c[1], c[2], c[3]])))
            .collect();
        records.push(TensorRecord { name, shape, data });
    }
    let body = r.pos;
    let stored = r.u32()?;
    if r.pos != bytes.len() {
        return Err(CheckpointError::Malformed(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    let computed = crc32fast::hash(&bytes[..body]);
    if stored != computed {
        return Err(CheckpointError::Checksum { stored, computed });
    }
    Ok(records)
}

/// Everything needed to resume training or run inference.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub state: TrainState,
    pub extractor: FrozenFeatureExtractor,
}

fn words_from_bytes(bytes: &[u8]) -> Vec<f32> {
    let mut words = vec![f32::from_bits(bytes.len() as u32)];
    words.extend(bytes.chunks(4).map(|c| {
        let mut w = [0u8; 4];
        w[..c.len()].copy_from_slice(c);
        f32::from_bits(u32::from_le_bytes(w))
    }));
    words
}

fn bytes_from_words(words: &[f32]) -> Result<Vec<u8>, CheckpointError> {
    let (len, rest) = words
        .split_first()
        .ok_or_else(|| CheckpointError::Malformed("empty byte record".into()))?;
    let len = len.to_bits() as usize;
    let mut out: Vec<u8> = rest.iter().flat_map(|w| w.to_bits().to_le_bytes()).collect();
    if len > out.len() {
        return Err(CheckpointError::Malformed("byte record shorter than its length".into()));
    }
    out.truncate(len);
    Ok(out)
}

fn u64_words(v: u64) -> [f32; 2] {
    [f32::from_bits(v as u32), f32::from_bits((v >> 32) as u32)]
}

fn words_u64(w: &[f32]) -> u64 {
    w[0].to_bits() as u64 | (w[1].to_bits() as u64) << 32
}

fn store_records(prefix: &str, store: &ParamStore<f32>, out: &mut Vec<TensorRecord>) {
    out.extend(store.iter().map(|p| TensorRecord {
        name: format!("{prefix}{}", p.name),
        shape: p.shape.clone(),
        data: p.data.clone(),
    }));
}

fn adam_records(prefix: &str, store: &ParamStore<f32>, adam: &AdamState<f32>, out: &mut Vec<TensorRecord>) {
    for (p, (m, v)) in store.iter().zip(&adam.moments) {
        for (kind, data) in [("m", m), ("v", v)] {
            out.push(TensorRecord {
                name: format!("{prefix}{kind}/{}", p.name),
                shape: p.shape.clone(),
                data: data.clone(),
            });
        }
    }
}

impl Checkpoint {
    pub fn new(model: ModelConfig, train: TrainConfig, state: TrainState) -> Self {
        let extractor = train.extractor();
        Checkpoint {
            model,
            train,
            state,
            extractor,
        }
    }

    pub fn network(&self) -> Result<Network, ngi_core::Error> {
        Network::new(self.model.clone())
    }

    pub fn to_records(&self) -> Vec<TensorRecord> {
        let mut out = Vec::new();
        let s = &self.state;
        let model = serde_json::to_vec(&self.model).expect("config serializes");
        let train = serde_json::to_vec(&self.train).expect("config serializes");
        for (name, bytes) in [("meta.model", model), ("meta.train", train)] {
            let data = words_from_bytes(&bytes);
            out.push(TensorRecord {
                name: name.into(),
                shape: vec![data.len()],
                data,
            });
        }
        let counters: Vec<f32> = [
            s.epoch,
            s.iteration,
            s.generator_opt.step,
            s.discriminator_opt.step,
            s.best_psnr.to_bits(),
        ]
        .into_iter()
        .flat_map(u64_words)
        .collect();
        out.push(TensorRecord {
            name: "meta.counters".into(),
            shape: vec![counters.len()],
            data: counters,
        });
        store_records("gen/", &s.generator, &mut out);
        store_records("disc/", &s.discriminator, &mut out);
        adam_records("adam.gen.", &s.generator, &s.generator_opt, &mut out);
        adam_records("adam.disc.", &s.discriminator, &s.discriminator_opt, &mut out);
        store_records("extractor/", &self.extractor.to_store(), &mut out);
        out
    }

    pub fn from_records(records: Vec<TensorRecord>) -> Result<Self, CheckpointError> {
        let mut by_name = std::collections::BTreeMap::new();
        for r in records {
            let name = r.name.clone();
            if by_name.insert(name.clone(), r).is_some() {
                return Err(CheckpointError::Malformed(format!("duplicate tensor `{name}`")));
            }
        }
        let missing = |n: &str| CheckpointError::Malformed(format!("missing tensor `{n}`"));
        let meta_json = |n: &str| -> Result<Vec<u8>, CheckpointError> {
            bytes_from_words(&by_name.get(n).ok_or_else(|| missing(n))?.data)
        };
        let bad = |e: serde_json::Error| CheckpointError::Malformed(format!("config: {e}"));
        let model: ModelConfig = serde_json::from_slice(&meta_json("meta.model")?).map_err(bad)?;
        let train: TrainConfig = serde_json::from_slice(&meta_json("meta.train")?).map_err(bad)?;
        let counters = &by_name.get("meta.counters").ok_or_else(|| missing("meta.counters"))?.data;
        if counters.len() != 10 {
            return Err(CheckpointError::Malformed("meta.counters must hold 10 words".into()));
        }
        let c = |i: usize| words_u64(&counters[2 * i..2 * i + 2]);

        let net = Network::new(model.clone()).map_err(|e| CheckpointError::Malformed(e.to_string()))?;
        // Parameter names and order come from a fresh model of the stored config.
        let load = |prefix: &str, template: ParamStore<f32>| -> Result<ParamStore<f32>, CheckpointError> {
            let mut out = ParamStore::new();
            for p in template.iter() {
                let name = format!("{prefix}{}", p.name);
                let r = by_name.get(&name).ok_or_else(|| missing(&name))?;
                if r.shape != p.shape {
                    return Err(CheckpointError::Malformed(format!("`{name}` has shape {:?}, model expects {:?}", r.shape, p.shape)));
                }
                out.insert(&p.name, &r.shape, r.data.clone())
                    .map_err(|e| CheckpointError::Malformed(e.to_string()))?;
            }
            Ok(out)
        };
        let generator = load("gen/", net.init_generator(0))?;
        let discriminator = load("disc/", net.init_discriminator(0))?;
        let adam = |prefix: &str, store: &ParamStore<f32>, config, step| -> Result<AdamState<f32>, CheckpointError> {
            let m = load(&format!("{prefix}m/"), store.clone())?;
            let v = load(&format!("{prefix}v/"), store.clone())?;
            let mut state = AdamState::new(config, store);
            state.step = step;
            state.moments = m.iter().zip(v.iter()).map(|(m, v)| (m.data.clone(), v.data.clone())).collect();
            Ok(state)
        };
        let generator_opt = adam("adam.gen.", &generator, train.generator_adam, c(2))?;
        let discriminator_opt = adam("adam.disc.", &discriminator, train.discriminator_adam, c(3))?;

        let mut ex = ParamStore::new();
        for (name, r) in by_name.range("extractor/".to_string()..) {
            let Some(short) = name.strip_prefix("extractor/") else { break };
            ex.insert(short, &r.shape, r.data.clone())
                .map_err(|e| CheckpointError::Malformed(e.to_string()))?;
        }
        let extractor = FrozenFeatureExtractor::from_store(&ex).map_err(|e| CheckpointError::Malformed(e.to_string()))?;

        Ok(Checkpoint {
            model,
            train,
            state: TrainState {
                generator,
                discriminator,
                generator_opt,
                discriminator_opt,
                epoch: c(0),
                iteration: c(1),
                best_psnr: f64::from_bits(c(4)),
            },
            extractor,
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        encode(&self.to_records())
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CheckpointError> {
        Self::from_records(decode(bytes)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        write_atomic(path, &self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn byte_records_round_trip() {
        for s in ["", "a", "abcd", "abcde"] {
            assert_eq!(bytes_from_words(&words_from_bytes(s.as_bytes())).unwrap(), s.as_bytes());
        }
        assert_eq!(words_u64(&u64_words(u64::MAX - 5)), u64::MAX - 5);
    }

    #[test]
    fn codec_errors_are_distinct() {
        let rec = vec![TensorRecord {
            name: "x".into(),
            shape: vec![2],
            data: vec![1.0, f32::from_bits(0x7fc0_0001)],
        }];
        let bytes = encode(&rec);
        let back = decode(&bytes).unwrap();
        assert_eq!(back[0].data[1].to_bits(), 0x7fc0_0001);
        assert!(matches!(decode(&bytes[..bytes.len() - 3]), Err(CheckpointError::Truncated)));
        let mut wrong = bytes.clone();
        wrong[0] = b'X';
        assert!(matches!(decode(&wrong), Err(CheckpointError::BadMagic(_))));
        let mut wrong = bytes.clone();
        wrong[4] = 9;
        assert!(matches!(decode(&wrong), Err(CheckpointError::Version { found: 9 })));
        let mut wrong = bytes.clone();
        let n = wrong.len();
        wrong[n - 6] ^= 1;
        assert!(matches!(decode(&wrong), Err(CheckpointError::Checksum { .. })));
    }
}
