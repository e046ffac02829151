//! Content hashing for geometry/config provenance and baseline caching.

use serde::Serialize;
use sha2::{Digest, Sha256};

/// Canonical short hash of any serializable value: sha256 over its canonical
/// JSON encoding, truncated to 16 hex characters.
pub fn content_hash<T: Serialize>(value: &T) -> String {
    let json = serde_json::to_string(value).expect("serializable value");
    let digest = Sha256::digest(json.as_bytes());
    let mut out = String::with_capacity(16);
    for b in &digest[..8] {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_is_stable_and_sensitive() {
        let a = content_hash(&("blade", 1.0f64, [1e-3, 2e-3]));
        let b = content_hash(&("blade", 1.0f64, [1e-3, 2e-3]));
        let c = content_hash(&("blade", 2.0f64, [1e-3, 2e-3]));
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.len(), 16);
    }
}
