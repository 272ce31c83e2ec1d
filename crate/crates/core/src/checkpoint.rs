//! Binary model container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic    8 bytes  "RELSTMCK"
//! version  u32
//! header   u64 length + UTF-8 JSON (config, labels, vocabularies, seed)
//! count    u64 number of tensors
//! tensor   u32 name length + name, u8 frozen, u64 rows, u64 cols,
//!          rows*cols f64 values in row-major order
//! ```
//!
//! Values are stored as raw IEEE-754 bits, so a write/read cycle is exact.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::LabelSchema;
use crate::error::{Error, Result};
use crate::features::FeatureVocabs;
use crate::model::{Model, ModelConfig};
use crate::params::ParamStore;
use crate::tensor::Matrix;
use crate::training::TrainConfig;

pub const MAGIC: &[u8; 8] = b"RELSTMCK";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Header {
    pub model: ModelConfig,
    pub labels: LabelSchema,
    pub vocabs: FeatureVocabs,
    pub train: Option<TrainConfig>,
}

/// A model plus the training settings that produced it, if known.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: Model,
    pub train: Option<TrainConfig>,
}

pub fn encode(model: &Model, train: Option<&TrainConfig>) -> Result<Vec<u8>> {
    let header = Header {
        model: model.config,
        labels: model.labels.clone(),
        vocabs: model.features.vocabs(),
        train: train.copied(),
    };
    let json = serde_json::to_vec(&header).map_err(|e| Error::Checkpoint(format!("header: {e}")))?;
    let mut out = Vec::with_capacity(json.len() + 8 * model.parameter_count() + 64);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&(model.store.len() as u64).to_le_bytes());
    for (_, p) in model.store.iter() {
        out.extend_from_slice(&(p.name.len() as u32).to_le_bytes());
        out.extend_from_slice(p.name.as_bytes());
        out.push(p.frozen as u8);
        out.extend_from_slice(&(p.value.rows() as u64).to_le_bytes());
        out.extend_from_slice(&(p.value.cols() as u64).to_le_bytes());
        for v in p.value.as_slice() {
            out.extend_from_slice(&v.to_bits().to_le_bytes());
        }
    }
    Ok(out)
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Checkpoint(format!("truncated while reading {what}")))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }

    fn len(&mut self, what: &str) -> Result<usize> {
        usize::try_from(self.u64(what)?).map_err(|_| Error::Checkpoint(format!("{what} too large")))
    }
}

pub fn decode(bytes: &[u8]) -> Result<Checkpoint> {
    let mut c = Cursor { buf: bytes, pos: 0 };
    if c.take(8, "magic")? != MAGIC {
        return Err(Error::Checkpoint("not a model checkpoint (bad magic)".into()));
    }
    let version = c.u32("version")?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported checkpoint version {version} (expected {VERSION})")));
    }
    let hlen = c.len("header length")?;
    let header: Header = serde_json::from_slice(c.take(hlen, "header")?)
        .map_err(|e| Error::Checkpoint(format!("header: {e}")))?;
    let count = c.len("tensor count")?;
    let mut store = ParamStore::new();
    for _ in 0..count {
        let nlen = c.u32("name length")? as usize;
        let name = std::str::from_utf8(c.take(nlen, "tensor name")?)
            .map_err(|_| Error::Checkpoint("tensor name is not UTF-8".into()))?
            .to_string();
        let frozen = match c.take(1, "frozen flag")?[0] {
            0 => false,
            1 => true,
            b => return Err(Error::Checkpoint(format!("{name}: bad frozen flag {b}"))),
        };
        let rows = c.len("rows")?;
        let cols = c.len("cols")?;
        let n = rows
            .checked_mul(cols)
            .and_then(|n| n.checked_mul(8))
            .ok_or_else(|| Error::Checkpoint(format!("{name}: shape overflows")))?;
        let data = c
            .take(n, &name)?
            .chunks_exact(8)
            .map(|b| f64::from_bits(u64::from_le_bytes(b.try_into().expect("8 bytes"))))
            .collect();
        let value = Matrix::from_vec(rows, cols, data)?;
        store
            .add(name, value, frozen)
            .map_err(|e| Error::Checkpoint(e.to_string()))?;
    }
    if c.pos != bytes.len() {
        return Err(Error::Checkpoint(format!("{} trailing bytes", bytes.len() - c.pos)));
    }
    let model = Model::from_parts(header.model, header.labels, &header.vocabs, store)?;
    Ok(Checkpoint {
        model,
        train: header.train,
    })
}

pub fn save(path: &Path, model: &Model, train: Option<&TrainConfig>) -> Result<()> {
    let bytes = encode(model, train)?;
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<Checkpoint> {
    let mut f = fs::File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingPath(path.to_path_buf()),
        _ => Error::io(path, e),
    })?;
    let mut bytes = Vec::new();
    f.read_to_end(&mut bytes).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{RelationInstance, Task};
    use crate::features::{parse_embeddings, Token};
    use crate::head::{EntitySpans, Span};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn model(seed: u64) -> Model {
        let inst = RelationInstance {
            id: "x".into(),
            tokens: ["Birds", "eat", "seeds"].iter().map(|w| Token::new(*w, "NN", "n.food")).collect(),
            spans: EntitySpans::new(Span::new(0, 0), Span::new(2, 2)),
            label: "Other".into(),
            window: 1,
        };
        let emb = parse_embeddings("birds 0.1 1e-300 -0.0 0.3\n".as_bytes(), 4, "e").unwrap();
        let mut cfg = ModelConfig::toy(4);
        cfg.init_range = 0.3;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Model::build(cfg, LabelSchema::for_task(Task::Semeval), &[inst], Some(emb), &mut rng).unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let m = model(9);
        let t = TrainConfig::default();
        let bytes = encode(&m, Some(&t)).unwrap();
        let back = decode(&bytes).unwrap();
        assert_eq!(back.train, Some(t));
        for ((_, a), (_, b)) in m.store.iter().zip(back.model.store.iter()) {
            let bits = |m: &Matrix| m.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            assert_eq!(a.name, b.name);
            assert_eq!(bits(&a.value), bits(&b.value));
        }
        assert_eq!(back.model, m);
        assert_eq!(encode(&back.model, Some(&t)).unwrap(), bytes);
    }

    #[test]
    fn corrupt_inputs_rejected() {
        let bytes = encode(&model(1), None).unwrap();
        assert!(decode(&bytes[..bytes.len() - 3]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode(&bad).is_err());
        let mut v2 = bytes.clone();
        v2[8] = 2;
        let e = decode(&v2).unwrap_err();
        assert!(e.to_string().contains("version 2"), "{e}");
        let mut extra = bytes;
        extra.push(0);
        assert!(decode(&extra).is_err());
    }
}
