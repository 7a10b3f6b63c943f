//! Collect: immutable, chunked, content-addressed dataset snapshots.
//!
//! A snapshot lives at `snapshots/<id>/` as `<chunk-index>.bin` files plus a
//! `manifest.json`. Its id is the SHA-256 of the concatenated chunk digests,
//! so it depends only on the bytes and the chunk size.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::graph::{content_id, ContentId};

pub const DEFAULT_CHUNK_SIZE: usize = 4 * 1024 * 1024;
pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, thiserror::Error)]
pub enum CollectError {
    #[error("I/O failure on {path}: {source}")]
    IoFailure { path: PathBuf, source: io::Error },
    #[error("chunk size must be at least one byte")]
    ZeroChunkSize,
    #[error("snapshot {snapshot} is missing chunk {index} ({path})")]
    MissingChunk {
        snapshot: ContentId,
        index: usize,
        path: PathBuf,
    },
    #[error("manifest {path} is malformed: {reason}")]
    BadManifest { path: PathBuf, reason: String },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CollectError + '_ {
    move |source| CollectError::IoFailure {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChunkRef {
    pub hash: ContentId,
    pub len: u64,
}

/// Manifest of a stored snapshot; field names are the manifest's JSON keys.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Snapshot {
    pub id: ContentId,
    pub source: String,
    pub chunk_size: usize,
    pub chunks: Vec<ChunkRef>,
}

impl Snapshot {
    /// Chunks `bytes` and derives the snapshot id without touching disk.
    pub fn compute(bytes: &[u8], source: &str, chunk_size: usize) -> Result<Snapshot, CollectError> {
        if chunk_size == 0 {
            return Err(CollectError::ZeroChunkSize);
        }
        let chunks: Vec<ChunkRef> = if bytes.is_empty() {
            vec![ChunkRef {
                hash: content_id(b""),
                len: 0,
            }]
        } else {
            bytes
                .chunks(chunk_size)
                .map(|c| ChunkRef {
                    hash: content_id(c),
                    len: c.len() as u64,
                })
                .collect()
        };
        Ok(Snapshot {
            id: root_id(&chunks),
            source: source.to_string(),
            chunk_size,
            chunks,
        })
    }

    pub fn chunk_ids(&self) -> impl Iterator<Item = ContentId> + '_ {
        self.chunks.iter().map(|c| c.hash)
    }
}

fn root_id(chunks: &[ChunkRef]) -> ContentId {
    let mut digests = Vec::with_capacity(chunks.len() * 32);
    for c in chunks {
        digests.extend_from_slice(c.hash.as_bytes());
    }
    content_id(&digests)
}

/// Result of re-hashing a stored snapshot.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Verification {
    Pass,
    Fail(Vec<ChunkFailure>),
}

impl Verification {
    pub fn passed(&self) -> bool {
        matches!(self, Verification::Pass)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChunkFailure {
    pub index: usize,
    pub path: PathBuf,
    pub expected: ContentId,
    pub actual: ContentId,
}

/// Filesystem layout rooted at a workspace's `snapshots/` directory.
#[derive(Debug, Clone)]
pub struct SnapshotStore {
    root: PathBuf,
}

impl SnapshotStore {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        SnapshotStore { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn dir(&self, id: &ContentId) -> PathBuf {
        self.root.join(id.to_hex())
    }

    pub fn chunk_path(&self, id: &ContentId, index: usize) -> PathBuf {
        self.dir(id).join(format!("{index}.bin"))
    }

    /// Reads `source` and persists it as a snapshot. An existing snapshot
    /// with the same id is left untouched.
    pub fn collect(&self, source: &Path, chunk_size: usize) -> Result<Snapshot, CollectError> {
        let bytes = fs::read(source).map_err(io_err(source))?;
        self.collect_bytes(&bytes, &source.display().to_string(), chunk_size)
    }

    pub fn collect_bytes(
        &self,
        bytes: &[u8],
        source: &str,
        chunk_size: usize,
    ) -> Result<Snapshot, CollectError> {
        let snapshot = Snapshot::compute(bytes, source, chunk_size)?;
        let dir = self.dir(&snapshot.id);
        let manifest_path = dir.join(MANIFEST);
        if manifest_path.exists() {
            return self.manifest(&snapshot.id);
        }
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        let mut offset = 0usize;
        for (index, chunk) in snapshot.chunks.iter().enumerate() {
            let end = offset + chunk.len as usize;
            let path = self.chunk_path(&snapshot.id, index);
            fs::write(&path, &bytes[offset..end]).map_err(io_err(&path))?;
            offset = end;
        }
        let json = serde_json::to_string_pretty(&snapshot).expect("manifest serializes");
        // Manifest last: its presence marks a complete snapshot.
        fs::write(&manifest_path, json + "\n").map_err(io_err(&manifest_path))?;
        Ok(snapshot)
    }

    pub fn manifest(&self, id: &ContentId) -> Result<Snapshot, CollectError> {
        let path = self.dir(id).join(MANIFEST);
        let text = fs::read_to_string(&path).map_err(io_err(&path))?;
        let snapshot: Snapshot = serde_json::from_str(&text).map_err(|e| CollectError::BadManifest {
            path: path.clone(),
            reason: e.to_string(),
        })?;
        if snapshot.id != *id {
            return Err(CollectError::BadManifest {
                path,
                reason: format!("manifest declares id {}", snapshot.id),
            });
        }
        Ok(snapshot)
    }

    /// All snapshot ids present on disk, sorted.
    pub fn list(&self) -> Result<Vec<ContentId>, CollectError> {
        if !self.root.exists() {
            return Ok(Vec::new());
        }
        let mut ids = Vec::new();
        for entry in fs::read_dir(&self.root).map_err(io_err(&self.root))? {
            let entry = entry.map_err(io_err(&self.root))?;
            if let Ok(id) = entry.file_name().to_string_lossy().parse::<ContentId>() {
                ids.push(id);
            }
        }
        ids.sort();
        Ok(ids)
    }

    /// Stored bytes, concatenated in chunk order.
    pub fn read_bytes(&self, snapshot: &Snapshot) -> Result<Vec<u8>, CollectError> {
        let mut out = Vec::new();
        for index in 0..snapshot.chunks.len() {
            out.extend(self.read_chunk(snapshot, index)?);
        }
        Ok(out)
    }

    fn read_chunk(&self, snapshot: &Snapshot, index: usize) -> Result<Vec<u8>, CollectError> {
        let path = self.chunk_path(&snapshot.id, index);
        match fs::read(&path) {
            Ok(bytes) => Ok(bytes),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Err(CollectError::MissingChunk {
                snapshot: snapshot.id,
                index,
                path,
            }),
            Err(e) => Err(io_err(&path)(e)),
        }
    }

    /// Re-hashes stored chunks against the manifest and the root id.
    pub fn verify_snapshot(&self, snapshot: &Snapshot) -> Result<Verification, CollectError> {
        let mut failures = Vec::new();
        for (index, chunk) in snapshot.chunks.iter().enumerate() {
            let bytes = self.read_chunk(snapshot, index)?;
            let actual = content_id(&bytes);
            if actual != chunk.hash {
                failures.push(ChunkFailure {
                    index,
                    path: self.chunk_path(&snapshot.id, index),
                    expected: chunk.hash,
                    actual,
                });
            }
        }
        if failures.is_empty() && root_id(&snapshot.chunks) != snapshot.id {
            failures.push(ChunkFailure {
                index: usize::MAX,
                path: self.dir(&snapshot.id).join(MANIFEST),
                expected: snapshot.id,
                actual: root_id(&snapshot.chunks),
            });
        }
        Ok(if failures.is_empty() {
            Verification::Pass
        } else {
            Verification::Fail(failures)
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn empty_file_is_one_empty_chunk() {
        let s = Snapshot::compute(b"", "empty", 4).unwrap();
        assert_eq!(s.chunks.len(), 1);
        assert_eq!(s.chunks[0].len, 0);
        // sha256(sha256("")), from python hashlib
        assert_eq!(
            s.id.to_hex(),
            "5df6e0e2761359d30a8275058e299fcc0381534545f55cf43e41983f5d4c9456"
        );
    }

    #[test]
    fn ten_bytes_in_chunks_of_four() {
        let dir = tempfile::tempdir().unwrap();
        let store = SnapshotStore::new(dir.path());
        let s = store.collect_bytes(b"0123456789", "ten", 4).unwrap();
        let lens: Vec<_> = s.chunks.iter().map(|c| c.len).collect();
        assert_eq!(lens, vec![4, 4, 2]);
        assert_eq!(store.read_bytes(&s).unwrap(), b"0123456789");
        assert_eq!(store.collect_bytes(b"0123456789", "again", 4).unwrap().id, s.id);
    }

    #[test]
    fn zero_chunk_size_rejected() {
        assert!(matches!(
            Snapshot::compute(b"x", "s", 0),
            Err(CollectError::ZeroChunkSize)
        ));
    }

    #[test]
    fn flipped_byte_names_the_chunk() {
        let dir = tempfile::tempdir().unwrap();
        let store = SnapshotStore::new(dir.path());
        let s = store.collect_bytes(b"0123456789", "ten", 4).unwrap();
        assert_eq!(store.verify_snapshot(&s).unwrap(), Verification::Pass);
        let path = store.chunk_path(&s.id, 1);
        let mut bytes = fs::read(&path).unwrap();
        bytes[2] ^= 0x01;
        fs::write(&path, &bytes).unwrap();
        match store.verify_snapshot(&s).unwrap() {
            Verification::Fail(f) => {
                assert_eq!(f.len(), 1);
                assert_eq!(f[0].index, 1);
                assert_eq!(f[0].actual, content_id(b"4577"));
            }
            Verification::Pass => panic!("corruption not detected"),
        }
    }

    #[test]
    fn deleted_chunk_is_missing() {
        let dir = tempfile::tempdir().unwrap();
        let store = SnapshotStore::new(dir.path());
        let s = store.collect_bytes(b"0123456789", "ten", 4).unwrap();
        fs::remove_file(store.chunk_path(&s.id, 2)).unwrap();
        assert!(matches!(
            store.verify_snapshot(&s),
            Err(CollectError::MissingChunk { index: 2, .. })
        ));
    }

    #[test]
    fn manifest_keys_are_exact() {
        let s = Snapshot::compute(b"ab", "src", 1).unwrap();
        let v: serde_json::Value = serde_json::to_value(&s).unwrap();
        let keys: Vec<_> = v.as_object().unwrap().keys().cloned().collect();
        assert_eq!(keys, vec!["chunk_size", "chunks", "id", "source"]);
        let chunk_keys: Vec<_> = v["chunks"][0].as_object().unwrap().keys().cloned().collect();
        assert_eq!(chunk_keys, vec!["hash", "len"]);
    }

    proptest! {
        #[test]
        fn collect_then_verify_passes(bytes in prop::collection::vec(any::<u8>(), 0..64), size in 1usize..9) {
            let dir = tempfile::tempdir().unwrap();
            let store = SnapshotStore::new(dir.path());
            let s = store.collect_bytes(&bytes, "p", size).unwrap();
            prop_assert!(store.verify_snapshot(&s).unwrap().passed());
            prop_assert_eq!(store.read_bytes(&s).unwrap(), bytes.clone());
            prop_assert!(s.chunks.iter().all(|c| c.len as usize <= size));
            prop_assert_eq!(Snapshot::compute(&bytes, "q", size).unwrap().id, s.id);
        }
    }
}
