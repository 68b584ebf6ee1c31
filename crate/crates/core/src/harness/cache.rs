//! Content-addressed model cache.
//!
//! Entries live in `<dir>/<key>.bin` where `key` is the SHA-256 of a JSON
//! description of everything the model depends on. File layout:
//! `"SVCC" u32 version, u32 key length, key, payload`.

use std::fs;
use std::path::PathBuf;

use log::warn;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::Utterance;
use crate::error::{Error, Result};
use crate::signal::Corruption;
use crate::svm::io::Reader;

const MAGIC: &[u8; 4] = b"SVCC";
pub const CACHE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CacheStatus {
    Hit,
    Miss,
    /// The stored entry was unusable and has been replaced.
    Recomputed { reason: String },
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Key of a JSON description. `serde_json` maps are ordered, so equal
/// descriptions give equal keys.
pub fn cache_key(description: &serde_json::Value) -> String {
    sha256_hex(description.to_string().as_bytes())
}

/// Digest of a set of utterances: ids, samples and alignments.
pub fn corpus_digest(utterances: &[Utterance]) -> String {
    let mut h = Sha256::new();
    for u in utterances {
        h.update((u.id.len() as u64).to_le_bytes());
        h.update(u.id.as_bytes());
        h.update((u.samples.len() as u64).to_le_bytes());
        for v in &u.samples {
            h.update(v.to_le_bytes());
        }
        for p in &u.phones {
            h.update((p.start as u64).to_le_bytes());
            h.update((p.end as u64).to_le_bytes());
            h.update((p.class_id as u64).to_le_bytes());
            h.update(p.label.as_bytes());
            h.update([0u8]);
        }
    }
    hex::encode(h.finalize())
}

/// JSON description of a corruption, including a digest of the RIR taps.
pub fn corruption_key(c: &Corruption) -> serde_json::Value {
    let rir = c.rir.as_ref().map(|r| {
        let bytes: Vec<u8> = r.taps.iter().flat_map(|t| t.to_le_bytes()).collect();
        serde_json::json!({ "name": r.name, "taps": sha256_hex(&bytes) })
    });
    serde_json::json!({
        "noise": c.noise.as_ref().map(|(k, db)| serde_json::json!({ "kind": k.to_string(), "snr_db": db })),
        "rir": rir,
    })
}

#[derive(Debug, Clone)]
pub struct ModelCache {
    dir: PathBuf,
}

impl ModelCache {
    pub fn open(dir: PathBuf) -> Result<Self> {
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(ModelCache { dir })
    }

    pub fn path(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.bin"))
    }

    fn read(&self, key: &str) -> Result<Option<std::result::Result<Vec<u8>, String>>> {
        let path = self.path(key);
        if !path.exists() {
            return Ok(None);
        }
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let mut r = Reader::new(&bytes);
        if r.take(4).ok() != Some(MAGIC.as_slice()) {
            return Ok(Some(Err(format!("{}: not a cache entry", path.display()))));
        }
        let version = match r.u32() {
            Ok(v) => v,
            Err(e) => return Ok(Some(Err(e.to_string()))),
        };
        if version != CACHE_VERSION {
            return Ok(Some(Err(format!(
                "{}: cache format {version}, expected {CACHE_VERSION}",
                path.display()
            ))));
        }
        let stored_key = r.len().and_then(|n| r.take(n));
        match stored_key {
            Ok(k) if k == key.as_bytes() => Ok(Some(Ok(bytes[4 + 4 + 8 + key.len()..].to_vec()))),
            _ => Ok(Some(Err(format!("{}: key mismatch", path.display())))),
        }
    }

    fn write(&self, key: &str, payload: &[u8]) -> Result<()> {
        let mut out = Vec::with_capacity(payload.len() + 80);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&CACHE_VERSION.to_le_bytes());
        out.extend_from_slice(&(key.len() as u64).to_le_bytes());
        out.extend_from_slice(key.as_bytes());
        out.extend_from_slice(payload);
        let path = self.path(key);
        let tmp = self.dir.join(format!("{key}.tmp"));
        fs::write(&tmp, &out).map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))
    }

    /// Loads the entry for `key`, or computes and stores it. Entries that
    /// fail to decode are recomputed.
    pub fn get_or_compute<T>(
        &self,
        key: &str,
        encode: impl Fn(&T) -> Result<Vec<u8>>,
        decode: impl Fn(&[u8]) -> Result<T>,
        compute: impl FnOnce() -> Result<T>,
    ) -> Result<(T, CacheStatus)> {
        let reason = match self.read(key)? {
            None => None,
            Some(Ok(payload)) => match decode(&payload) {
                Ok(v) => return Ok((v, CacheStatus::Hit)),
                Err(e) => Some(format!("{}: {e}", self.path(key).display())),
            },
            Some(Err(reason)) => Some(reason),
        };
        if let Some(r) = &reason {
            warn!("recomputing cache entry: {r}");
        }
        let value = compute()?;
        self.write(key, &encode(&value)?)?;
        let status = match reason {
            None => CacheStatus::Miss,
            Some(reason) => CacheStatus::Recomputed { reason },
        };
        Ok((value, status))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn enc(v: &u64) -> Result<Vec<u8>> {
        Ok(v.to_le_bytes().to_vec())
    }

    fn dec(b: &[u8]) -> Result<u64> {
        b.try_into()
            .map(u64::from_le_bytes)
            .map_err(|_| Error::Format("bad payload".into()))
    }

    #[test]
    fn miss_then_hit() {
        let dir = tempfile::tempdir().unwrap();
        let cache = ModelCache::open(dir.path().to_path_buf()).unwrap();
        let key = cache_key(&serde_json::json!({"b": 1, "a": [2, 3]}));
        let (v, s) = cache.get_or_compute(&key, enc, dec, || Ok(7)).unwrap();
        assert_eq!((v, s), (7, CacheStatus::Miss));
        let (v, s) = cache.get_or_compute(&key, enc, dec, || panic!("recomputed")).unwrap();
        assert_eq!((v, s), (7, CacheStatus::Hit));
    }

    #[test]
    fn version_mismatch_recomputes() {
        let dir = tempfile::tempdir().unwrap();
        let cache = ModelCache::open(dir.path().to_path_buf()).unwrap();
        let key = "k".to_string();
        cache.get_or_compute(&key, enc, dec, || Ok(1)).unwrap();
        let path = cache.path(&key);
        let mut bytes = fs::read(&path).unwrap();
        bytes[4..8].copy_from_slice(&(CACHE_VERSION + 1).to_le_bytes());
        fs::write(&path, bytes).unwrap();
        let (v, s) = cache.get_or_compute(&key, enc, dec, || Ok(2)).unwrap();
        assert_eq!(v, 2);
        assert!(matches!(s, CacheStatus::Recomputed { ref reason } if reason.contains("cache format")));
        assert_eq!(cache.get_or_compute(&key, enc, dec, || Ok(3)).unwrap(), (2, CacheStatus::Hit));
    }

    #[test]
    fn key_ignores_field_order() {
        let a = serde_json::json!({"x": 1, "y": {"p": 2, "q": 3}});
        let b: serde_json::Value = serde_json::from_str(r#"{"y": {"q": 3, "p": 2}, "x": 1}"#).unwrap();
        assert_eq!(cache_key(&a), cache_key(&b));
        assert_ne!(cache_key(&a), cache_key(&serde_json::json!({"x": 2})));
    }
}
