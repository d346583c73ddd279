//! Keyed random streams.
//!
//! Every random draw in a simulated replication comes from a ChaCha stream
//! keyed by `(seed, replication index)` and selected by a [`Stream`] id, so
//! that e.g. switching the dropout mechanism never shifts the outcome draws.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Independent purposes a replication draws randomness for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Covariates = 1,
    Treatment = 2,
    Residuals = 3,
    Dropout = 4,
}

/// Identifies one replication of one scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ReplicationKey {
    pub seed: u64,
    pub rep: u64,
}

impl ReplicationKey {
    pub fn new(seed: u64, rep: u64) -> Self {
        Self { seed, rep }
    }

    pub fn rng(&self, stream: Stream) -> ChaCha8Rng {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&self.seed.to_le_bytes());
        key[8..16].copy_from_slice(&self.rep.to_le_bytes());
        key[16..24].copy_from_slice(&splitmix64(self.seed).to_le_bytes());
        key[24..].copy_from_slice(&splitmix64(self.rep ^ 0xA076_1D64_78BD_642F).to_le_bytes());
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(stream as u64);
        rng
    }
}

/// SplitMix64 finalizer.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for scenario `index` of a grid run under `base`.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    splitmix64(base ^ splitmix64(index))
}
