//! Content fingerprints for configs, data and fitted models.

use serde::Serialize;
use sha2::{Digest, Sha256};

/// Hex SHA-256 of the JSON serialization of `value`, truncated to 16 hex chars.
pub fn fingerprint<T: Serialize + ?Sized>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("fingerprinted values serialize to JSON");
    fingerprint_bytes(&bytes)
}

pub fn fingerprint_bytes(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    hex::encode(&digest[..8])
}
