//! Content-addressed response cache, in memory with an optional disk mirror.
//!
//! Disk layout: `<dir>/<backend_id>/<key>.txt` or `.png`, plus `<key>.json`
//! with the entry metadata. Files are written to a temp name and renamed so a
//! crashed run never leaves a half-written entry behind.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::http::{decode_png, encode_png};
use super::templates::Stage;
use crate::scene_data::RgbFrame;

#[derive(Debug, thiserror::Error)]
pub enum CacheError {
    #[error("cache io at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cache encode: {0}")]
    Encode(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CacheKey {
    pub backend_id: String,
    pub template_id: String,
    pub stage: Stage,
    pub inputs_hash: String,
}

impl CacheKey {
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for part in [
            self.backend_id.as_str(),
            self.template_id.as_str(),
            &self.stage.to_string(),
            self.inputs_hash.as_str(),
        ] {
            h.update((part.len() as u64).to_le_bytes());
            h.update(part.as_bytes());
        }
        hex::encode(h.finalize())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CachedValue {
    Text(String),
    Image(RgbFrame),
}

#[derive(Serialize, Deserialize)]
struct EntryMeta {
    backend_id: String,
    template_id: String,
    stage: Stage,
    inputs_hash: String,
    kind: String,
    created_at_unix_s: u64,
}

type Slot = Arc<Mutex<Option<CachedValue>>>;

#[derive(Debug, Default)]
pub struct ResponseCache {
    dir: Option<PathBuf>,
    slots: Mutex<HashMap<String, Slot>>,
    hits: AtomicUsize,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CacheError + '_ {
    move |source| CacheError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn safe_component(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.' { c } else { '_' })
        .collect()
}

pub fn unix_now() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CacheError> {
    let tmp = path.with_extension(format!("tmp{}", std::process::id()));
    fs::write(&tmp, bytes).map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))
}

impl ResponseCache {
    pub fn in_memory() -> Self {
        ResponseCache::default()
    }

    pub fn on_disk(dir: impl Into<PathBuf>) -> Result<Self, CacheError> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        Ok(ResponseCache {
            dir: Some(dir),
            ..Default::default()
        })
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    /// Number of lookups answered without calling the backend.
    pub fn hits(&self) -> usize {
        self.hits.load(Ordering::SeqCst)
    }

    fn entry_paths(&self, key: &CacheKey) -> Option<(PathBuf, String)> {
        self.dir
            .as_ref()
            .map(|d| (d.join(safe_component(&key.backend_id)), key.digest()))
    }

    fn load_disk(&self, key: &CacheKey) -> Option<CachedValue> {
        let (dir, digest) = self.entry_paths(key)?;
        let meta: EntryMeta = serde_json::from_slice(&fs::read(dir.join(format!("{digest}.json"))).ok()?).ok()?;
        let loaded = match meta.kind.as_str() {
            "text" => fs::read_to_string(dir.join(format!("{digest}.txt"))).ok().map(CachedValue::Text),
            "image" => fs::read(dir.join(format!("{digest}.png")))
                .ok()
                .and_then(|b| decode_png(&b).ok())
                .map(CachedValue::Image),
            _ => None,
        };
        if loaded.is_none() {
            log::warn!("ignoring unreadable cache entry {digest} for {}", key.backend_id);
        }
        loaded
    }

    fn store_disk(&self, key: &CacheKey, value: &CachedValue) -> Result<(), CacheError> {
        let Some((dir, digest)) = self.entry_paths(key) else {
            return Ok(());
        };
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        let kind = match value {
            CachedValue::Text(t) => {
                write_atomic(&dir.join(format!("{digest}.txt")), t.as_bytes())?;
                "text"
            }
            CachedValue::Image(img) => {
                let png = encode_png(img).map_err(|e| CacheError::Encode(e.to_string()))?;
                write_atomic(&dir.join(format!("{digest}.png")), &png)?;
                "image"
            }
        };
        let meta = EntryMeta {
            backend_id: key.backend_id.clone(),
            template_id: key.template_id.clone(),
            stage: key.stage,
            inputs_hash: key.inputs_hash.clone(),
            kind: kind.into(),
            created_at_unix_s: unix_now(),
        };
        let json = serde_json::to_vec_pretty(&meta).map_err(|e| CacheError::Encode(e.to_string()))?;
        write_atomic(&dir.join(format!("{digest}.json")), &json)
    }

    /// Returns the cached value for `key`, computing and storing it on a miss.
    ///
    /// Concurrent callers with the same key wait for the first one, so the
    /// producer runs at most once per key. Errors are not cached.
    pub fn get_or_try_insert<E: From<CacheError>>(
        &self,
        key: &CacheKey,
        produce: impl FnOnce() -> Result<CachedValue, E>,
    ) -> Result<(CachedValue, bool), E> {
        let slot = {
            let mut slots = self.slots.lock().unwrap_or_else(|p| p.into_inner());
            Arc::clone(slots.entry(key.digest()).or_default())
        };
        let mut guard = slot.lock().unwrap_or_else(|p| p.into_inner());
        if let Some(v) = guard.as_ref() {
            self.hits.fetch_add(1, Ordering::SeqCst);
            return Ok((v.clone(), true));
        }
        if let Some(v) = self.load_disk(key) {
            self.hits.fetch_add(1, Ordering::SeqCst);
            *guard = Some(v.clone());
            return Ok((v, true));
        }
        let v = produce()?;
        self.store_disk(key, &v)?;
        *guard = Some(v.clone());
        Ok((v, false))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn key(t: &str) -> CacheKey {
        CacheKey {
            backend_id: "mock/1".into(),
            template_id: t.into(),
            stage: Stage::Descriptor,
            inputs_hash: "abc".into(),
        }
    }

    #[test]
    fn memory_hit_skips_producer() {
        let c = ResponseCache::in_memory();
        let (v, hit) = c
            .get_or_try_insert::<CacheError>(&key("a"), || Ok(CachedValue::Text("x".into())))
            .unwrap();
        assert!(!hit);
        let (v2, hit2) = c
            .get_or_try_insert::<CacheError>(&key("a"), || panic!("should be cached"))
            .unwrap();
        assert!(hit2);
        assert_eq!(v, v2);
    }

    #[test]
    fn errors_are_not_cached() {
        let c = ResponseCache::in_memory();
        let r: Result<_, CacheError> = c.get_or_try_insert(&key("a"), || Err(CacheError::Encode("boom".into())));
        assert!(r.is_err());
        let (_, hit) = c
            .get_or_try_insert::<CacheError>(&key("a"), || Ok(CachedValue::Text("x".into())))
            .unwrap();
        assert!(!hit);
    }

    #[test]
    fn disk_replay_across_instances() {
        let dir = tempfile::tempdir().unwrap();
        let img = RgbFrame::filled(3, 2, [1, 2, 3], 0.0).unwrap();
        {
            let c = ResponseCache::on_disk(dir.path()).unwrap();
            c.get_or_try_insert::<CacheError>(&key("img"), || Ok(CachedValue::Image(img.clone())))
                .unwrap();
            c.get_or_try_insert::<CacheError>(&key("txt"), || Ok(CachedValue::Text("s.".into())))
                .unwrap();
        }
        let c = ResponseCache::on_disk(dir.path()).unwrap();
        let (v, hit) = c
            .get_or_try_insert::<CacheError>(&key("img"), || panic!("should replay"))
            .unwrap();
        assert!(hit);
        assert_eq!(v, CachedValue::Image(img));
        let sub = dir.path().join("mock_1");
        let names: Vec<String> = fs::read_dir(&sub)
            .unwrap()
            .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
            .collect();
        assert_eq!(names.len(), 4, "{names:?}");
        assert!(names.iter().all(|n| !n.contains("tmp")));
    }

    #[test]
    fn distinct_keys_distinct_digests() {
        assert_ne!(key("a").digest(), key("b").digest());
        let mut k = key("a");
        k.stage = Stage::Editor;
        assert_ne!(k.digest(), key("a").digest());
    }
}
