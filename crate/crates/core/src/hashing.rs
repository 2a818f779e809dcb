//! Stable hashing and digest helpers shared by every module that needs
//! reproducible output across runs and platforms.

use sha2::{Digest, Sha256};
use xxhash_rust::xxh3::xxh3_64;

/// Stable 64-bit hash of arbitrary bytes.
pub fn stable_hash64(bytes: &[u8]) -> u64 {
    xxh3_64(bytes)
}

/// Hex-encoded SHA-256 of `bytes`.
pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// SHA-256 digest of a value's canonical JSON form.
///
/// Structs serialize in declaration order and every map in this crate is a
/// `BTreeMap`, so the JSON text is stable.
pub fn json_digest<T: serde::Serialize>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("digest input serializes");
    sha256_hex(&bytes)
}
