//! Labelled, seeded random streams.
//!
//! Every consumer of randomness (factor initialization, epoch shuffling,
//! train/test splitting, synthetic data) draws from its own stream keyed by
//! a master seed and a label. The stream seed is a SHA-256 digest of the two,
//! so sequences are stable across runs, platforms and execution order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub const INIT_U: &str = "init-U";
pub const INIT_V: &str = "init-V";
pub const SHUFFLE: &str = "shuffle";
pub const SPLIT: &str = "split";
pub const SYNTH: &str = "synth";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RngStream {
    seed: u64,
    label: String,
}

impl RngStream {
    pub fn new(seed: u64, label: impl Into<String>) -> Self {
        Self {
            seed,
            label: label.into(),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    fn digest(&self) -> [u8; 32] {
        let mut hasher = Sha256::new();
        hasher.update(self.seed.to_le_bytes());
        hasher.update((self.label.len() as u64).to_le_bytes());
        hasher.update(self.label.as_bytes());
        let mut out = [0u8; 32];
        out.copy_from_slice(&hasher.finalize());
        out
    }

    /// Derives a 64-bit seed for a sub-consumer (used for per-cell seeds).
    pub fn derive_seed(&self) -> u64 {
        let d = self.digest();
        u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
    }

    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::from_seed(self.digest())
    }
}

#[cfg(test)]
mod tests {
    use rand::Rng;

    use super::*;

    #[test]
    fn same_seed_and_label_repeat() {
        let a: Vec<u64> = RngStream::new(7, INIT_U).rng().random_iter().take(16).collect();
        let b: Vec<u64> = RngStream::new(7, INIT_U).rng().random_iter().take(16).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn labels_separate_streams() {
        let mut a = RngStream::new(7, INIT_U).rng();
        let mut b = RngStream::new(7, INIT_V).rng();
        assert_ne!(a.random::<u64>(), b.random::<u64>());
        assert_ne!(
            RngStream::new(1, SPLIT).derive_seed(),
            RngStream::new(2, SPLIT).derive_seed()
        );
    }

    #[test]
    fn derived_seed_is_pinned() {
        // Guards against silent changes to the derivation scheme. Value from
        // an external SHA-256 of le(42) ++ le(4) ++ "cell".
        assert_eq!(RngStream::new(42, "cell").derive_seed(), 1661073122369216517);
    }
}
