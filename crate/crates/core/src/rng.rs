//! Seeded random streams.
//!
//! Every stream is a ChaCha8 generator whose key packs
//! (master seed, replication, sub-index) and whose stream id is the role.
//! Streams therefore depend only on their coordinates, never on the order in
//! which they are created, which is what makes parallel runs reproducible.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// What a stream is used for. Distinct roles never share output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum StreamRole {
    Path = 1,
    InitialState = 2,
    ConditionalPaths = 3,
    Auxiliary = 4,
}

/// Coordinates of a stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamKey {
    pub master_seed: u64,
    pub replication: u64,
    pub sub: u64,
    pub role: StreamRole,
}

impl StreamKey {
    pub fn new(master_seed: u64, replication: u64, role: StreamRole) -> Self {
        Self {
            master_seed,
            replication,
            sub: 0,
            role,
        }
    }

    pub fn with_sub(mut self, sub: u64) -> Self {
        self.sub = sub;
        self
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&self.master_seed.to_le_bytes());
        key[8..16].copy_from_slice(&self.replication.to_le_bytes());
        key[16..24].copy_from_slice(&self.sub.to_le_bytes());
        key[24..].copy_from_slice(b"slil-rng");
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(self.role as u64);
        rng
    }
}

/// Stream for a single path drawn with a plain 64-bit seed.
pub fn path_rng(seed: u64) -> ChaCha8Rng {
    StreamKey::new(seed, 0, StreamRole::Path).rng()
}

/// Uniform draw on [0, 1) with 53 random bits.
#[inline]
pub fn uniform<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}
