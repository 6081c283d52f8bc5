//! Keyed random streams.
//!
//! Every consumer of randomness asks for a stream by key `(seed, replication,
//! seller, purpose)`. The key is hashed into a ChaCha8 seed, so streams are
//! reproducible regardless of how replications are scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// What a random stream is used for.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Purpose {
    Exploration,
    Noise,
    MonteCarlo,
    Design,
    Other(u32),
}

impl Purpose {
    fn code(self) -> u64 {
        match self {
            Purpose::Exploration => 1,
            Purpose::Noise => 2,
            Purpose::MonteCarlo => 3,
            Purpose::Design => 4,
            Purpose::Other(k) => 0x100 + k as u64,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct StreamKey {
    pub seed: u64,
    pub replication: u64,
    pub seller: u64,
    pub purpose: Purpose,
}

impl StreamKey {
    pub fn new(seed: u64, replication: u64, seller: u64, purpose: Purpose) -> Self {
        Self {
            seed,
            replication,
            seller,
            purpose,
        }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut state = splitmix(self.seed);
        for word in [self.replication, self.seller, self.purpose.code()] {
            state = splitmix(state ^ word.wrapping_mul(0x9E37_79B9_7F4A_7C15));
        }
        let mut bytes = [0u8; 32];
        for chunk in bytes.chunks_mut(8) {
            state = splitmix(state);
            chunk.copy_from_slice(&state.to_le_bytes());
        }
        ChaCha8Rng::from_seed(bytes)
    }
}

/// Shorthand for `StreamKey::new(..).rng()`.
pub fn stream(seed: u64, replication: u64, seller: u64, purpose: Purpose) -> ChaCha8Rng {
    StreamKey::new(seed, replication, seller, purpose).rng()
}

/// Mixes several integers into one 64-bit seed.
pub fn derive_seed(parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(0x243F_6A88_85A3_08D3, |acc, &p| splitmix(acc ^ splitmix(p)))
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
