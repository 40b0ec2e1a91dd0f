//! Deterministic RNG streams derived from a run seed.
//!
//! Every consumer of randomness gets its own named stream so that adding a
//! draw in one place never shifts the numbers seen by another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type StreamRng = ChaCha8Rng;

/// RNG for the named stream of a run.
pub fn stream_rng(seed: u64, stream: &str) -> StreamRng {
    item_rng(seed, u64::MAX, stream)
}

/// RNG for one item (e.g. one sentence) of a named stream.
pub fn item_rng(seed: u64, item: u64, stream: &str) -> StreamRng {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(item.to_le_bytes());
    h.update(stream.as_bytes());
    let digest: [u8; 32] = h.finalize().into();
    ChaCha8Rng::from_seed(digest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: u64 = item_rng(7, 3, "eda").random();
        let b: u64 = item_rng(7, 3, "eda").random();
        let c: u64 = item_rng(7, 4, "eda").random();
        let d: u64 = item_rng(7, 3, "mlm").random();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, d);
    }
}
