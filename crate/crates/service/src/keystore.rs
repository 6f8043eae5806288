//! Single-file API key store.
//!
//! Keys are presented as `<key_id>.<secret>`. The file holds only a salted
//! SHA-256 of each secret (`sha256$<salt hex>$<digest hex>`); secrets are
//! 256-bit random values, so a fast hash is sufficient. The file is replaced
//! atomically on every change and re-read whenever its modification stamp
//! moves, so `keys revoke` takes effect on a running server.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::SystemTime;

use crowdlens_core::Timestamp;
use parking_lot::RwLock;
use rand::RngCore;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use subtle::ConstantTimeEq;
use thiserror::Error;

const SALT_LEN: usize = 16;
const SECRET_LEN: usize = 32;
const KEY_ID_LEN: usize = 8;
const SCHEME: &str = "sha256";

/// Verified against when the presented key id is unknown, so unknown and
/// known ids cost the same.
const DECOY_HASH: &str = "sha256$00000000000000000000000000000000$0000000000000000000000000000000000000000000000000000000000000000";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiKeyRecord {
    pub key_id: String,
    pub secret_hash: String,
    pub label: String,
    pub revoked: bool,
    pub created_at: Timestamp,
}

/// What `list` shows: everything but the hash.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct KeySummary {
    pub key_id: String,
    pub label: String,
    pub revoked: bool,
    pub created_at: Timestamp,
}

/// A freshly issued key. The token is available exactly here.
pub struct IssuedKey {
    pub key_id: String,
    pub token: String,
}

impl fmt::Debug for IssuedKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("IssuedKey").field("key_id", &self.key_id).field("token", &"***").finish()
    }
}

#[derive(Debug, Error)]
pub enum KeyStoreError {
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("{path}: not a valid key store: {message}")]
    Corrupt { path: String, message: String },
    #[error("unknown key id {0:?}")]
    UnknownKey(String),
    #[error("label must not be empty")]
    EmptyLabel,
}

#[derive(Default, Serialize, Deserialize)]
struct KeyFile {
    keys: Vec<ApiKeyRecord>,
}

type Stamp = (SystemTime, u64);

struct Loaded {
    stamp: Option<Stamp>,
    records: BTreeMap<String, ApiKeyRecord>,
}

pub struct KeyStore {
    path: PathBuf,
    state: RwLock<Loaded>,
}

fn io_err(path: &Path, e: impl fmt::Display) -> KeyStoreError {
    KeyStoreError::Io { path: path.display().to_string(), message: e.to_string() }
}

fn stamp_of(path: &Path) -> Result<Option<Stamp>, KeyStoreError> {
    match std::fs::metadata(path) {
        Ok(m) => Ok(Some((m.modified().map_err(|e| io_err(path, e))?, m.len()))),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(io_err(path, e)),
    }
}

fn read_file(path: &Path) -> Result<(Option<Stamp>, BTreeMap<String, ApiKeyRecord>), KeyStoreError> {
    let stamp = stamp_of(path)?;
    if stamp.is_none() {
        return Ok((None, BTreeMap::new()));
    }
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let file: KeyFile = serde_json::from_str(&text)
        .map_err(|e| KeyStoreError::Corrupt { path: path.display().to_string(), message: e.to_string() })?;
    Ok((stamp, file.keys.into_iter().map(|r| (r.key_id.clone(), r)).collect()))
}

fn write_file(path: &Path, records: &BTreeMap<String, ApiKeyRecord>) -> Result<(), KeyStoreError> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let tmp = dir.join(format!(".{}.tmp", path.file_name().and_then(|n| n.to_str()).unwrap_or("keys")));
    let body = serde_json::to_string_pretty(&KeyFile { keys: records.values().cloned().collect() }).expect("records serialize");
    let mut opts = std::fs::OpenOptions::new();
    opts.write(true).create(true).truncate(true);
    #[cfg(unix)]
    {
        use std::os::unix::fs::OpenOptionsExt;
        opts.mode(0o600);
    }
    let mut f = opts.open(&tmp).map_err(|e| io_err(&tmp, e))?;
    f.write_all(body.as_bytes()).and_then(|_| f.write_all(b"\n")).and_then(|_| f.sync_all()).map_err(|e| io_err(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| io_err(path, e))
}

fn digest(salt: &[u8], secret: &[u8]) -> Vec<u8> {
    let mut h = Sha256::new();
    h.update(salt);
    h.update(secret);
    h.finalize().to_vec()
}

pub fn hash_secret(secret: &str) -> String {
    let mut salt = [0u8; SALT_LEN];
    rand::rng().fill_bytes(&mut salt);
    format!("{SCHEME}${}${}", hex::encode(salt), hex::encode(digest(&salt, secret.as_bytes())))
}

/// Constant-time in the digest comparison; malformed hashes never match.
pub fn verify_secret(stored: &str, secret: &str) -> bool {
    let mut parts = stored.split('$');
    let (Some(SCHEME), Some(salt), Some(expected), None) = (parts.next(), parts.next(), parts.next(), parts.next()) else {
        return false;
    };
    let (Ok(salt), Ok(expected)) = (hex::decode(salt), hex::decode(expected)) else {
        return false;
    };
    digest(&salt, secret.as_bytes()).ct_eq(&expected).into()
}

impl KeyStore {
    /// Opens the store at `path`; a missing file is an empty store.
    pub fn open(path: impl Into<PathBuf>) -> Result<Self, KeyStoreError> {
        let path = path.into();
        let (stamp, records) = read_file(&path)?;
        Ok(KeyStore { path, state: RwLock::new(Loaded { stamp, records }) })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Re-reads the file if it changed. A file that fails to parse leaves
    /// the last good state in place.
    fn refresh(&self) {
        let current = match stamp_of(&self.path) {
            Ok(s) => s,
            Err(e) => {
                tracing::warn!(error = %e, "key store not readable; keeping previous keys");
                return;
            }
        };
        if self.state.read().stamp == current {
            return;
        }
        match read_file(&self.path) {
            Ok((stamp, records)) => {
                tracing::info!(keys = records.len(), "key store reloaded");
                *self.state.write() = Loaded { stamp, records };
            }
            Err(e) => tracing::warn!(error = %e, "key store reload failed; keeping previous keys"),
        }
    }

    /// The key id of a valid, non-revoked `<key_id>.<secret>` token.
    pub fn verify(&self, presented: &str) -> Option<String> {
        self.refresh();
        let (key_id, secret) = presented.split_once('.').unwrap_or((presented, ""));
        let state = self.state.read();
        let record = state.records.get(key_id);
        let stored = record.map_or(DECOY_HASH, |r| r.secret_hash.as_str());
        let matches = verify_secret(stored, secret);
        match record {
            Some(r) if matches && !r.revoked => Some(r.key_id.clone()),
            _ => None,
        }
    }

    /// Whether `key_id` exists and is not revoked, as of the file on disk.
    pub fn is_active(&self, key_id: &str) -> bool {
        self.refresh();
        self.state.read().records.get(key_id).is_some_and(|r| !r.revoked)
    }

    fn modify<T>(&self, f: impl FnOnce(&mut BTreeMap<String, ApiKeyRecord>) -> Result<T, KeyStoreError>) -> Result<T, KeyStoreError> {
        let mut state = self.state.write();
        let (_, mut records) = read_file(&self.path)?;
        let out = f(&mut records)?;
        write_file(&self.path, &records)?;
        *state = Loaded { stamp: stamp_of(&self.path)?, records };
        Ok(out)
    }

    pub fn add(&self, label: &str) -> Result<IssuedKey, KeyStoreError> {
        let label = label.trim();
        if label.is_empty() {
            return Err(KeyStoreError::EmptyLabel);
        }
        self.modify(|records| {
            let mut rng = rand::rng();
            let key_id = loop {
                let mut id = [0u8; KEY_ID_LEN];
                rng.fill_bytes(&mut id);
                let id = format!("ck{}", hex::encode(id));
                if !records.contains_key(&id) {
                    break id;
                }
            };
            let mut secret = [0u8; SECRET_LEN];
            rng.fill_bytes(&mut secret);
            let secret = hex::encode(secret);
            records.insert(
                key_id.clone(),
                ApiKeyRecord {
                    key_id: key_id.clone(),
                    secret_hash: hash_secret(&secret),
                    label: label.to_string(),
                    revoked: false,
                    created_at: Timestamp::now(),
                },
            );
            Ok(IssuedKey { token: format!("{key_id}.{secret}"), key_id })
        })
    }

    pub fn revoke(&self, key_id: &str) -> Result<(), KeyStoreError> {
        self.modify(|records| match records.get_mut(key_id) {
            Some(r) => {
                r.revoked = true;
                Ok(())
            }
            None => Err(KeyStoreError::UnknownKey(key_id.to_string())),
        })
    }

    pub fn list(&self) -> Vec<KeySummary> {
        self.refresh();
        self.state
            .read()
            .records
            .values()
            .map(|r| KeySummary { key_id: r.key_id.clone(), label: r.label.clone(), revoked: r.revoked, created_at: r.created_at })
            .collect()
    }
}
