//! Small digest helpers shared by the sink, the solver and the oracle.

use sha2::{Digest, Sha256};

/// Hex-encoded SHA-256 over a list of byte chunks, truncated to 16 bytes.
pub fn digest_chunks<'a, I>(chunks: I) -> String
where
    I: IntoIterator<Item = &'a [u8]>,
{
    let mut hasher = Sha256::new();
    for chunk in chunks {
        hasher.update((chunk.len() as u64).to_le_bytes());
        hasher.update(chunk);
    }
    let out = hasher.finalize();
    out[..16].iter().map(|b| format!("{b:02x}")).collect()
}

/// First eight digest bytes as a u64, for seeding deterministic RNGs.
pub fn digest_seed<'a, I>(chunks: I) -> u64
where
    I: IntoIterator<Item = &'a [u8]>,
{
    let mut hasher = Sha256::new();
    for chunk in chunks {
        hasher.update((chunk.len() as u64).to_le_bytes());
        hasher.update(chunk);
    }
    let out = hasher.finalize();
    u64::from_le_bytes(out[..8].try_into().expect("sha256 yields 32 bytes"))
}

/// FNV-1a over an edge pair, used to index the coverage bitmap.
pub fn edge_hash(prev: u32, cur: u32) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in prev.to_le_bytes().iter().chain(cur.to_le_bytes().iter()) {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}
