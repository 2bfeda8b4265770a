//! Precomputed-embedding file, format tag `NWRZ-EMB-1`.
//!
//! Lets any external tool inject genuine contextual embeddings in place of
//! the hashing featurizer. Records are keyed by `(instance_id,
//! filler_index)`; row ids of the form `<instance>_<k>` resolve to that
//! key, other ids resolve to `(id, 0)`.
//!
//! Layout after the header (`NWRZ-EMB-1`, `dim=<d>`, `count=<n>`,
//! `end-header`): for each record, a u32 LE id length, the UTF-8 instance
//! id, a u32 LE filler index, then two `d`-long little-endian f64 vectors —
//! context first, filler second, matching the pooled layout. Halves are
//! L2-normalized on load so they obey the same contract as featurizer
//! output.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use crate::dataset::{instance_key, ClozeInstance};
use crate::encoder::PoolingMode;
use crate::error::{Error, Result};

pub const EMBEDDING_TAG: &str = "NWRZ-EMB-1";
const END_HEADER: &str = "end-header";

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingRecord {
    pub instance_id: String,
    pub filler_index: u32,
    pub context: Vec<f64>,
    pub filler: Vec<f64>,
}

/// In-memory view of one embedding file.
#[derive(Debug, Clone)]
pub struct EmbeddingStore {
    dim: usize,
    records: HashMap<(String, u32), (Vec<f64>, Vec<f64>)>,
}

fn l2_normalize(v: &mut [f64]) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        for x in v.iter_mut() {
            *x /= norm;
        }
    }
}

impl EmbeddingStore {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, instance_id: &str, filler_index: u32) -> Option<(&[f64], &[f64])> {
        self.records
            .get(&(instance_id.to_string(), filler_index))
            .map(|(c, f)| (c.as_slice(), f.as_slice()))
    }

    /// Pooled vector for one row id, honoring the pooling mode.
    pub fn pooled_for(&self, row_id: &str, pooling: PoolingMode) -> Result<Vec<f64>> {
        let (instance_id, filler_index) = instance_key(row_id);
        let (context, filler) = self.get(instance_id, filler_index).ok_or_else(|| {
            Error::data(format!(
                "no embedding record for row `{row_id}` (key ({instance_id}, {filler_index}))"
            ))
        })?;
        Ok(match pooling {
            PoolingMode::Concat => {
                let mut v = context.to_vec();
                v.extend_from_slice(filler);
                v
            }
            PoolingMode::FillerOnly => filler.to_vec(),
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut raw = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut raw))
            .map_err(|e| Error::io(path, e))?;
        let bad = |msg: String| Error::Config(format!("embedding file {}: {msg}", path.display()));

        let mut cursor = 0usize;
        let next_line = |raw: &[u8], cursor: &mut usize| -> Result<String> {
            let nl = raw[*cursor..]
                .iter()
                .position(|&b| b == b'\n')
                .ok_or_else(|| bad("unterminated header".into()))?;
            let line = std::str::from_utf8(&raw[*cursor..*cursor + nl])
                .map_err(|_| bad("header is not UTF-8".into()))?
                .to_string();
            *cursor += nl + 1;
            Ok(line)
        };

        let tag = next_line(&raw, &mut cursor)?;
        if tag != EMBEDDING_TAG {
            return Err(bad(format!(
                "bad format tag `{tag}` (expected `{EMBEDDING_TAG}`)"
            )));
        }
        let dim_line = next_line(&raw, &mut cursor)?;
        let dim: usize = dim_line
            .strip_prefix("dim=")
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| bad(format!("bad dim line `{dim_line}`")))?;
        let count_line = next_line(&raw, &mut cursor)?;
        let count: usize = count_line
            .strip_prefix("count=")
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| bad(format!("bad count line `{count_line}`")))?;
        let end = next_line(&raw, &mut cursor)?;
        if end != END_HEADER {
            return Err(bad(format!("expected `{END_HEADER}`, found `{end}`")));
        }

        let mut records = HashMap::with_capacity(count);
        let take = |raw: &[u8], cursor: &mut usize, n: usize| -> Result<Vec<u8>> {
            if *cursor + n > raw.len() {
                return Err(bad("truncated record".into()));
            }
            let bytes = raw[*cursor..*cursor + n].to_vec();
            *cursor += n;
            Ok(bytes)
        };
        for _ in 0..count {
            let id_len =
                u32::from_le_bytes(take(&raw, &mut cursor, 4)?.try_into().unwrap()) as usize;
            let id = String::from_utf8(take(&raw, &mut cursor, id_len)?)
                .map_err(|_| bad("record id is not UTF-8".into()))?;
            let filler_index =
                u32::from_le_bytes(take(&raw, &mut cursor, 4)?.try_into().unwrap());
            let read_vec = |cursor: &mut usize| -> Result<Vec<f64>> {
                let bytes = take(&raw, cursor, dim * 8)?;
                Ok(bytes
                    .chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                    .collect())
            };
            let mut context = read_vec(&mut cursor)?;
            let mut filler = read_vec(&mut cursor)?;
            l2_normalize(&mut context);
            l2_normalize(&mut filler);
            if records.insert((id.clone(), filler_index), (context, filler)).is_some() {
                return Err(bad(format!("duplicate record key ({id}, {filler_index})")));
            }
        }
        if cursor != raw.len() {
            return Err(bad(format!(
                "{} trailing bytes after {count} records",
                raw.len() - cursor
            )));
        }
        Ok(Self { dim, records })
    }

    /// Writes records in the given order (the file keeps producer order;
    /// loading is order-insensitive).
    pub fn write(path: impl AsRef<Path>, dim: usize, records: &[EmbeddingRecord]) -> Result<()> {
        let path = path.as_ref();
        for r in records {
            if r.context.len() != dim || r.filler.len() != dim {
                return Err(Error::Config(format!(
                    "record ({}, {}) has vectors of dim {}/{}, declared {dim}",
                    r.instance_id,
                    r.filler_index,
                    r.context.len(),
                    r.filler.len()
                )));
            }
        }
        let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let header = format!("{EMBEDDING_TAG}\ndim={dim}\ncount={}\n{END_HEADER}\n", records.len());
        file.write_all(header.as_bytes())
            .map_err(|e| Error::io(path, e))?;
        for r in records {
            let mut bytes = Vec::new();
            bytes.extend_from_slice(&(r.instance_id.len() as u32).to_le_bytes());
            bytes.extend_from_slice(r.instance_id.as_bytes());
            bytes.extend_from_slice(&r.filler_index.to_le_bytes());
            for v in r.context.iter().chain(&r.filler) {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
            file.write_all(&bytes).map_err(|e| Error::io(path, e))?;
        }
        Ok(())
    }
}

/// Pooled vectors for every row, resolved from the store instead of the
/// featurizer. The `2 * dim` (or `dim`) layout matches [`crate::encoder::pool`].
pub fn pool_all_from_store(
    instances: &[ClozeInstance],
    store: &EmbeddingStore,
    pooling: PoolingMode,
) -> Result<Vec<Vec<f64>>> {
    instances
        .iter()
        .map(|inst| store.pooled_for(&inst.id, pooling))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    fn record(id: &str, k: u32, dim: usize, fill: f64) -> EmbeddingRecord {
        EmbeddingRecord {
            instance_id: id.into(),
            filler_index: k,
            context: (0..dim).map(|i| fill + i as f64).collect(),
            filler: (0..dim).map(|i| -(fill + i as f64)).collect(),
        }
    }

    #[test]
    fn write_load_round_trip_with_normalization() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("emb.bin");
        let records = vec![record("ctx1", 1, 3, 1.0), record("ctx1", 2, 3, 2.0)];
        EmbeddingStore::write(&path, 3, &records).unwrap();
        let store = EmbeddingStore::load(&path).unwrap();
        assert_eq!(store.dim(), 3);
        assert_eq!(store.len(), 2);

        let (ctx, fil) = store.get("ctx1", 1).unwrap();
        let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((norm(ctx) - 1.0).abs() < 1e-12);
        assert!((norm(fil) - 1.0).abs() < 1e-12);

        let pooled = store.pooled_for("ctx1_2", PoolingMode::Concat).unwrap();
        assert_eq!(pooled.len(), 6);
        let filler_only = store.pooled_for("ctx1_2", PoolingMode::FillerOnly).unwrap();
        assert_eq!(filler_only.len(), 3);
        assert_eq!(&pooled[3..], filler_only.as_slice());

        assert!(store.pooled_for("missing_1", PoolingMode::Concat).is_err());
    }

    #[test]
    fn rejects_malformed_files() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("emb.bin");
        EmbeddingStore::write(&path, 2, &[record("a", 1, 2, 0.5)]).unwrap();

        let mut bytes = std::fs::read(&path).unwrap();
        bytes.truncate(bytes.len() - 4);
        let trunc = dir.path().join("trunc.bin");
        std::fs::write(&trunc, &bytes).unwrap();
        assert!(EmbeddingStore::load(&trunc).is_err());

        let bad = dir.path().join("bad.bin");
        std::fs::write(&bad, b"NOT-A-TAG\n").unwrap();
        assert!(EmbeddingStore::load(&bad).is_err());
    }

    #[test]
    fn write_rejects_wrong_dims() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("emb.bin");
        let err = EmbeddingStore::write(&path, 5, &[record("a", 1, 2, 0.5)]).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }
}
