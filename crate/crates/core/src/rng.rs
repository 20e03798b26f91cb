//! Named, independent random streams derived from a user-visible master seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub type StreamRng = ChaCha8Rng;

/// Streams consumed by a single run. Each one is seeded independently, so
/// reseeding one (e.g. noise) leaves the draws of the others untouched.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stream {
    Data,
    Partition,
    Trust,
    Init,
    Minibatch,
    Noise,
}

impl Stream {
    pub fn name(self) -> &'static str {
        match self {
            Stream::Data => "data",
            Stream::Partition => "partition",
            Stream::Trust => "trust",
            Stream::Init => "init",
            Stream::Minibatch => "minibatch",
            Stream::Noise => "noise",
        }
    }
}

/// Stable 256-bit seed for `(master_seed, run_index, stream)`.
pub fn derive_seed(master_seed: u64, run_index: u64, stream: &str) -> [u8; 32] {
    let mut hasher = Sha256::new();
    hasher.update(b"dphfl-stream-v1");
    hasher.update(master_seed.to_le_bytes());
    hasher.update(run_index.to_le_bytes());
    hasher.update((stream.len() as u64).to_le_bytes());
    hasher.update(stream.as_bytes());
    hasher.finalize().into()
}

/// Per-run collection of stream seeds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedBook {
    pub master_seed: u64,
    pub run_index: u64,
}

impl SeedBook {
    pub fn new(master_seed: u64, run_index: u64) -> Self {
        Self {
            master_seed,
            run_index,
        }
    }

    pub fn rng(&self, stream: Stream) -> StreamRng {
        StreamRng::from_seed(derive_seed(self.master_seed, self.run_index, stream.name()))
    }

    /// A 64-bit seed for APIs that take a plain integer.
    pub fn seed_u64(&self, stream: Stream) -> u64 {
        let bytes = derive_seed(self.master_seed, self.run_index, stream.name());
        u64::from_le_bytes(bytes[..8].try_into().expect("8 bytes"))
    }
}

/// Convenience for APIs that accept a bare integer seed.
pub fn rng_from_u64(seed: u64) -> StreamRng {
    StreamRng::seed_from_u64(seed)
}
