//! Content digests over canonical JSON.
//!
//! All artifact and cache identities derive from SHA-256 over a canonical
//! JSON encoding: compact separators and lexicographically ordered object
//! keys (guaranteed by `serde_json`'s BTreeMap-backed `Value` maps). Two
//! semantically equal values therefore always digest identically,
//! regardless of how their fields were ordered at construction.

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut hex = String::with_capacity(64);
    for byte in digest {
        use std::fmt::Write;
        write!(hex, "{byte:02x}").expect("writing to String cannot fail");
    }
    hex
}

/// Compact JSON with sorted object keys.
pub fn canonical_json(value: &Value) -> String {
    serde_json::to_string(value).expect("serializing a Value cannot fail")
}

/// SHA-256 (hex) of the canonical JSON encoding.
pub fn digest_value(value: &Value) -> String {
    sha256_hex(canonical_json(value).as_bytes())
}

/// SHA-256 (hex) of any serializable value, via its canonical JSON form.
pub fn digest_of<T: Serialize>(value: &T) -> Result<String, serde_json::Error> {
    Ok(digest_value(&serde_json::to_value(value)?))
}
