//! Content-addressed attachment storage: `blobs/<first-2-hex>/<hash>`.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

/// Lowercase hex SHA-256 of `bytes`.
pub fn content_hash(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Relative storage locator for a digest.
pub fn media_ref(hash: &str) -> String {
    format!("blobs/{}/{}", &hash[..2], hash)
}

#[derive(Debug, Clone)]
pub struct BlobStore {
    root: PathBuf,
}

impl BlobStore {
    /// `data_dir` is the directory that contains `blobs/`.
    pub fn new(data_dir: impl AsRef<Path>) -> Self {
        BlobStore {
            root: data_dir.as_ref().to_path_buf(),
        }
    }

    pub fn path_for(&self, hash: &str) -> PathBuf {
        self.root.join(media_ref(hash))
    }

    /// Stores `bytes` and returns their digest. Writing the same content
    /// twice is a no-op.
    pub fn put(&self, bytes: &[u8]) -> io::Result<String> {
        let hash = content_hash(bytes);
        let path = self.path_for(&hash);
        if path.exists() {
            return Ok(hash);
        }
        let dir = path.parent().expect("blob path has a parent");
        fs::create_dir_all(dir)?;
        let tmp = dir.join(format!(".{hash}.tmp"));
        {
            let mut f = fs::File::create(&tmp)?;
            f.write_all(bytes)?;
            f.sync_all()?;
        }
        fs::rename(&tmp, &path)?;
        Ok(hash)
    }

    pub fn get(&self, hash: &str) -> io::Result<Vec<u8>> {
        if hash.len() < 2 || !hash.bytes().all(|b| b.is_ascii_hexdigit()) {
            return Err(io::Error::new(io::ErrorKind::InvalidInput, "not a digest"));
        }
        fs::read(self.path_for(hash))
    }
}
