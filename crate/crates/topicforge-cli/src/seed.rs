use sha2::{Digest, Sha256};

/// Derive an independent stream seed from the run seed and a stream name.
///
/// SHA-256 over the run seed's little-endian bytes followed by the name,
/// truncated to the first eight digest bytes (read little-endian). Streams
/// with different names are statistically independent, so adding one
/// subcommand's randomness never perturbs another's.
pub fn stream_seed(run_seed: u64, name: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(run_seed.to_le_bytes());
    hasher.update(name.as_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest is 32 bytes"))
}
