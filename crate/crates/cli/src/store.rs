//! On-disk matrix cache: `<kind>-<digest>.wkam` binaries with JSON sidecars.
//!
//! The digest is the SHA-256 of the key's canonical JSON. The sidecar repeats
//! the full key and the checksum of the binary; a load succeeds only if both
//! match. Writers hold an exclusive advisory lock on `<stem>.lock` and publish
//! by rename, so concurrent writers of the same key end with one complete pair
//! (last writer wins) and readers never see a torn file.

use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use weak_kam::cache::{MatrixKey, MatrixStore};
use weak_kam::minplus::io::{encode_matrix, read_matrix};
use weak_kam::CostMatrix;

#[derive(Debug, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub kind: String,
    pub format_version: u32,
    pub sha256: String,
    pub key: serde_json::Value,
}

pub struct DiskStore {
    dir: PathBuf,
    writable: bool,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl DiskStore {
    pub fn new(dir: impl Into<PathBuf>, writable: bool) -> Self {
        Self { dir: dir.into(), writable }
    }

    pub fn stem(key: &MatrixKey) -> String {
        let digest = sha256_hex(key.canonical_json().as_bytes());
        format!("{}-{}", key.kind.tag(), &digest[..24])
    }

    pub fn paths(&self, key: &MatrixKey) -> (PathBuf, PathBuf, PathBuf) {
        let stem = Self::stem(key);
        (
            self.dir.join(format!("{stem}.wkam")),
            self.dir.join(format!("{stem}.json")),
            self.dir.join(format!("{stem}.lock")),
        )
    }

    fn try_load(&self, key: &MatrixKey) -> Result<Option<CostMatrix>, String> {
        let (bin, side, lock) = self.paths(key);
        if !side.exists() || !bin.exists() {
            return Ok(None);
        }
        let _guard = match File::open(&lock) {
            Ok(f) => {
                f.lock_shared().map_err(|e| format!("lock {}: {e}", lock.display()))?;
                Some(f)
            }
            Err(_) => None,
        };
        let sidecar: Sidecar = serde_json::from_slice(&fs::read(&side).map_err(|e| e.to_string())?)
            .map_err(|e| format!("sidecar {}: {e}", side.display()))?;
        let expected: serde_json::Value = serde_json::from_str(&key.canonical_json()).expect("valid json");
        if sidecar.key != expected || sidecar.kind != key.kind.tag() {
            return Err(format!("sidecar {} describes a different matrix", side.display()));
        }
        let bytes = fs::read(&bin).map_err(|e| e.to_string())?;
        if sha256_hex(&bytes) != sidecar.sha256 {
            return Err(format!("checksum mismatch for {}", bin.display()));
        }
        read_matrix(&bytes[..]).map(Some).map_err(|e| e.to_string())
    }

    fn try_save(&self, key: &MatrixKey, m: &CostMatrix) -> std::io::Result<()> {
        fs::create_dir_all(&self.dir)?;
        let (bin, side, lock) = self.paths(key);
        let lock_file = OpenOptions::new().create(true).truncate(false).write(true).open(&lock)?;
        lock_file.lock()?;
        let bytes = encode_matrix(m);
        let sidecar = Sidecar {
            kind: key.kind.tag().to_string(),
            format_version: weak_kam::minplus::io::VERSION,
            sha256: sha256_hex(&bytes),
            key: serde_json::from_str(&key.canonical_json()).expect("valid json"),
        };
        publish(&bin, &bytes)?;
        publish(&side, &serde_json::to_vec_pretty(&sidecar).expect("sidecar serializes"))?;
        lock_file.unlock()
    }
}

/// Write to a sibling temp file, then rename over the target.
fn publish(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let tmp = path.with_extension(format!("tmp{}", std::process::id()));
    let mut f = File::create(&tmp)?;
    f.write_all(bytes)?;
    f.sync_all()?;
    fs::rename(&tmp, path)
}

impl MatrixStore for DiskStore {
    fn load(&self, key: &MatrixKey) -> Option<CostMatrix> {
        match self.try_load(key) {
            Ok(m) => m,
            Err(e) => {
                log::warn!("ignoring cache entry: {e}");
                None
            }
        }
    }

    fn save(&self, key: &MatrixKey, m: &CostMatrix) {
        if !self.writable {
            return;
        }
        if let Err(e) = self.try_save(key, m) {
            log::warn!("cache write failed in {}: {e}", self.dir.display());
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use weak_kam::cache::MatrixKind;
    use weak_kam::torus::build_grid;
    use weak_kam::{HamiltonianSpec, OneForm};

    fn key() -> MatrixKey {
        MatrixKey {
            kind: MatrixKind::Cost,
            grid: build_grid(1, 8, 0.25, 2.0).unwrap(),
            spec: HamiltonianSpec::pendulum(),
            form: OneForm::constant(vec![0.0]),
            barrier: None,
        }
    }

    fn matrix() -> CostMatrix {
        CostMatrix::from_entries(2, vec![0.0, 1.5, f64::INFINITY, -0.25], 0.5).unwrap()
    }

    #[test]
    fn round_trip_and_read_only() {
        let dir = tempfile::tempdir().unwrap();
        let rw = DiskStore::new(dir.path(), true);
        assert!(rw.load(&key()).is_none());
        rw.save(&key(), &matrix());
        let back = rw.load(&key()).unwrap();
        assert_eq!(back, matrix());

        let ro = DiskStore::new(dir.path().join("other"), false);
        ro.save(&key(), &matrix());
        assert!(!dir.path().join("other").exists());
    }

    #[test]
    fn corrupted_binary_is_a_miss() {
        let dir = tempfile::tempdir().unwrap();
        let store = DiskStore::new(dir.path(), true);
        store.save(&key(), &matrix());
        let (bin, _, _) = store.paths(&key());
        let mut bytes = fs::read(&bin).unwrap();
        let last = bytes.len() - 1;
        bytes[last] ^= 1;
        fs::write(&bin, bytes).unwrap();
        assert!(store.load(&key()).is_none());
    }

    #[test]
    fn different_keys_do_not_collide() {
        let dir = tempfile::tempdir().unwrap();
        let store = DiskStore::new(dir.path(), true);
        store.save(&key(), &matrix());
        let mut other = key();
        other.form = OneForm::constant(vec![0.5]);
        assert!(store.load(&other).is_none());
        assert_ne!(DiskStore::stem(&key()), DiskStore::stem(&other));
    }
}
