//! Binary checkpoint format.
//!
//! ```text
//! "SORN"                 4 bytes magic
//! version                u32 = 1
//! metadata               u32 length + UTF-8 `key = value` lines
//! tensor count           u32
//! per tensor, sorted by name:
//!   name                 u32 length + UTF-8
//!   rank                 u8 (always 4)
//!   dims                 rank × u32
//!   data                 Π dims × f32
//! ```
//!
//! All integers and floats are little-endian. Serialization is canonical:
//! equal contents always produce equal bytes.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::kv;
use crate::tensor::{Shape, Tensor};

pub const MAGIC: &[u8; 4] = b"SORN";
pub const VERSION: u32 = 1;
/// Optimizer moments are stored as `adam.m.<param>` and `adam.v.<param>`.
pub const ADAM_PREFIX: &str = "adam.";

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Checkpoint {
    pub meta: BTreeMap<String, String>,
    pub tensors: BTreeMap<String, Tensor>,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        let meta = kv::render(&self.meta);
        out.extend_from_slice(&(meta.len() as u32).to_le_bytes());
        out.extend_from_slice(meta.as_bytes());
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for (name, t) in &self.tensors {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.push(4);
            for d in t.shape().dims() {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Checkpoint> {
        let mut r = Reader { bytes, pos: 0 };
        let magic = r.take(4, "magic")?;
        if magic != MAGIC {
            return Err(Error::Checkpoint {
                offset: 0,
                msg: format!("bad magic {magic:?}, expected \"SORN\""),
            });
        }
        let version = r.u32("version")?;
        if version != VERSION {
            return Err(Error::Checkpoint {
                offset: 4,
                msg: format!("unsupported version {version}"),
            });
        }
        let meta_len = r.u32("metadata length")? as usize;
        let meta_at = r.pos;
        let meta_bytes = r.take(meta_len, "metadata")?;
        let meta_text = std::str::from_utf8(meta_bytes).map_err(|_| Error::Checkpoint {
            offset: meta_at,
            msg: "metadata is not UTF-8".into(),
        })?;
        let meta = kv::parse(meta_text).map_err(|e| Error::Checkpoint {
            offset: meta_at,
            msg: format!("metadata: {e}"),
        })?;

        let count = r.u32("tensor count")? as usize;
        let mut tensors = BTreeMap::new();
        for i in 0..count {
            let record_at = r.pos;
            let ctx = |what: &str| format!("tensor record {i} {what}");
            let name_len = r.u32(&ctx("name length"))? as usize;
            let name_bytes = r.take(name_len, &ctx("name"))?;
            let name = String::from_utf8(name_bytes.to_vec()).map_err(|_| Error::Checkpoint {
                offset: record_at,
                msg: ctx("name is not UTF-8"),
            })?;
            let ctx = |what: &str| format!("tensor record {i} ('{name}') {what}");
            let rank = r.take(1, &ctx("rank"))?[0];
            if rank != 4 {
                return Err(Error::Checkpoint {
                    offset: r.pos - 1,
                    msg: ctx(&format!("has rank {rank}, expected 4")),
                });
            }
            let mut dims = [0usize; 4];
            for d in &mut dims {
                *d = r.u32(&ctx("dims"))? as usize;
            }
            let shape = Shape(dims);
            let numel = dims.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d));
            let bytes_needed = numel.and_then(|n| n.checked_mul(4)).ok_or_else(|| Error::Checkpoint {
                offset: record_at,
                msg: ctx(&format!("shape {shape} overflows")),
            })?;
            let raw = r.take(bytes_needed, &ctx("data"))?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            if tensors.contains_key(&name) {
                return Err(Error::Checkpoint {
                    offset: record_at,
                    msg: ctx("is a duplicate name"),
                });
            }
            let tensor = Tensor::from_vec(shape, data)?;
            tensors.insert(name, tensor);
        }
        if r.pos != bytes.len() {
            return Err(Error::Checkpoint {
                offset: r.pos,
                msg: format!("{} trailing bytes", bytes.len() - r.pos),
            });
        }
        Ok(Checkpoint { meta, tensors })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Checkpoint> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Checkpoint::from_bytes(&bytes)
    }

    pub fn meta_value<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let raw = self
            .meta
            .get(key)
            .ok_or_else(|| Error::Config(format!("checkpoint metadata lacks '{key}'")))?;
        raw.parse()
            .map_err(|_| Error::Config(format!("checkpoint metadata '{key}' = '{raw}' is malformed")))
    }

    /// Metadata keys under `prefix.`, with the prefix stripped.
    pub fn meta_section(&self, prefix: &str) -> BTreeMap<String, String> {
        let p = format!("{prefix}.");
        self.meta
            .iter()
            .filter_map(|(k, v)| k.strip_prefix(&p).map(|s| (s.to_string(), v.clone())))
            .collect()
    }

    pub fn set_section(&mut self, prefix: &str, kv: &BTreeMap<String, String>) {
        for (k, v) in kv {
            self.meta.insert(format!("{prefix}.{k}"), v.clone());
        }
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(Error::Checkpoint {
                offset: self.pos,
                msg: format!(
                    "truncated {what}: needs {n} bytes, {} remain",
                    self.bytes.len() - self.pos
                ),
            }),
        }
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn sample() -> Checkpoint {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut c = Checkpoint::default();
        c.meta.insert("iteration".into(), "200".into());
        c.meta.insert("spec.arch".into(), "selfonn".into());
        c.tensors.insert("head.bias".into(), Tensor::uniform(Shape::new(1, 4, 1, 1), -1.0, 1.0, &mut rng));
        c.tensors.insert("head.kernel1".into(), Tensor::uniform(Shape::new(4, 3, 3, 3), -1.0, 1.0, &mut rng));
        c
    }

    #[test]
    fn round_trip_is_exact() {
        let c = sample();
        let bytes = c.to_bytes();
        assert_eq!(&bytes[..4], MAGIC);
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_bytes(), bytes);

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.ckpt");
        c.save(&path).unwrap();
        assert_eq!(Checkpoint::load(&path).unwrap(), c);
    }

    #[test]
    fn byte_layout_of_a_tiny_checkpoint() {
        let mut c = Checkpoint::default();
        c.meta.insert("k".into(), "v".into());
        c.tensors.insert("x".into(), Tensor::full(Shape::new(1, 1, 1, 1), 1.0));
        let mut want = b"SORN".to_vec();
        want.extend_from_slice(&1u32.to_le_bytes());
        want.extend_from_slice(&6u32.to_le_bytes());
        want.extend_from_slice(b"k = v\n");
        want.extend_from_slice(&1u32.to_le_bytes());
        want.extend_from_slice(&1u32.to_le_bytes());
        want.push(b'x');
        want.push(4);
        for _ in 0..4 {
            want.extend_from_slice(&1u32.to_le_bytes());
        }
        want.extend_from_slice(&1.0f32.to_le_bytes());
        assert_eq!(c.to_bytes(), want);
    }

    fn offset_of(err: Error) -> (usize, String) {
        match err {
            Error::Checkpoint { offset, msg } => (offset, msg),
            other => panic!("expected a checkpoint error, got {other}"),
        }
    }

    #[test]
    fn corruption_is_located() {
        let bytes = sample().to_bytes();

        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert_eq!(offset_of(Checkpoint::from_bytes(&bad).unwrap_err()).0, 0);

        let mut bad = bytes.clone();
        bad[4] = 2;
        let (off, msg) = offset_of(Checkpoint::from_bytes(&bad).unwrap_err());
        assert_eq!(off, 4);
        assert!(msg.contains("version 2"));

        let (off, msg) = offset_of(Checkpoint::from_bytes(&bytes[..bytes.len() - 3]).unwrap_err());
        assert!(msg.contains("truncated") && msg.contains("head.kernel1"), "{msg}");
        assert!(off < bytes.len());

        let mut long = bytes.clone();
        long.push(0);
        let (off, msg) = offset_of(Checkpoint::from_bytes(&long).unwrap_err());
        assert_eq!(off, bytes.len());
        assert!(msg.contains("1 trailing"));

        let meta_len = u32::from_le_bytes([bytes[8], bytes[9], bytes[10], bytes[11]]) as usize;
        let rank_at = 12 + meta_len + 4 + 4 + "head.bias".len();
        let mut bad = bytes.clone();
        bad[rank_at] = 3;
        let (off, msg) = offset_of(Checkpoint::from_bytes(&bad).unwrap_err());
        assert_eq!(off, rank_at);
        assert!(msg.contains("rank 3"));

        assert!(matches!(Checkpoint::from_bytes(&[]), Err(Error::Checkpoint { offset: 0, .. })));
    }

    #[test]
    fn sections_and_typed_metadata() {
        let mut c = sample();
        assert_eq!(c.meta_value::<u64>("iteration").unwrap(), 200);
        assert!(c.meta_value::<u64>("spec.arch").is_err());
        assert!(c.meta_value::<u64>("absent").is_err());
        let mut extra = BTreeMap::new();
        extra.insert("channels".to_string(), "4".to_string());
        c.set_section("spec", &extra);
        let s = c.meta_section("spec");
        assert_eq!(s.len(), 2);
        assert_eq!(s["arch"], "selfonn");
        assert_eq!(s["channels"], "4");
    }
}
