//! Stable content hashing used for fingerprints, cache keys, split
//! assignment and seed derivation. Everything here must produce the same
//! bytes on every platform and every run.

use sha2::{Digest, Sha256};

/// Full SHA-256 of `bytes` as lowercase hex.
pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    to_hex(&digest)
}

/// First 8 bytes of the SHA-256 digest, big-endian.
pub fn hash64(bytes: &[u8]) -> u64 {
    let digest = Sha256::digest(bytes);
    let mut buf = [0u8; 8];
    buf.copy_from_slice(&digest[..8]);
    u64::from_be_bytes(buf)
}

/// Hash of several string parts, separated so that ("ab","c") != ("a","bc").
pub fn hash64_parts(parts: &[&str]) -> u64 {
    let mut hasher = Sha256::new();
    for part in parts {
        hasher.update((part.len() as u64).to_le_bytes());
        hasher.update(part.as_bytes());
    }
    let digest = hasher.finalize();
    let mut buf = [0u8; 8];
    buf.copy_from_slice(&digest[..8]);
    u64::from_be_bytes(buf)
}

/// Maps a 64-bit hash onto [0, 1).
pub fn unit_interval(h: u64) -> f64 {
    (h >> 11) as f64 / (1u64 << 53) as f64
}

/// Per-stage seed derived from the global seed and the stage name.
pub fn stage_seed(global: u64, stage: &str) -> u64 {
    hash64_parts(&[&global.to_string(), stage])
}

fn to_hex(bytes: &[u8]) -> String {
    use std::fmt::Write;
    let mut out = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        let _ = write!(out, "{b:02x}");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sha256_known_vector() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn parts_are_length_prefixed() {
        assert_ne!(hash64_parts(&["ab", "c"]), hash64_parts(&["a", "bc"]));
    }

    #[test]
    fn unit_interval_bounds() {
        assert_eq!(unit_interval(0), 0.0);
        assert!(unit_interval(u64::MAX) < 1.0);
    }

    #[test]
    fn stage_seeds_differ_by_name() {
        assert_ne!(stage_seed(7, "split"), stage_seed(7, "train-toy"));
        assert_eq!(stage_seed(7, "split"), stage_seed(7, "split"));
    }
}
