//! SHA-256 helpers for fingerprints and artifact hashes.

use std::io;
use std::path::Path;

use sha2::{Digest, Sha256};

pub fn sha256_hex(bytes: impl AsRef<[u8]>) -> String {
    hex::encode(Sha256::digest(bytes.as_ref()))
}

pub fn file_sha256(path: &Path) -> io::Result<String> {
    Ok(sha256_hex(std::fs::read(path)?))
}
