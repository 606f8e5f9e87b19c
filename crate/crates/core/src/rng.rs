//! Keyed random streams.
//!
//! Every path owns a family of independent ChaCha8 streams derived from
//! `(base seed, path index, tag)`, so a path is reproducible on its own and
//! the draws never depend on how paths are scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Identifies one simulated path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PathSeed {
    pub base: u64,
    pub index: u64,
}

impl PathSeed {
    pub fn new(base: u64, index: u64) -> Self {
        PathSeed { base, index }
    }
}

/// Purpose of a stream within a path.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamTag {
    Auction,
    /// Candidate points of one layer of one band.
    Layer { band: u8, layer: u16 },
}

pub const MAX_LAYERS: u16 = 1 << 12;

impl StreamTag {
    fn code(self) -> u64 {
        match self {
            StreamTag::Auction => 0,
            StreamTag::Layer { band, layer } => {
                debug_assert!(band < 8 && layer < MAX_LAYERS);
                1 + ((band as u64) << 12 | layer as u64)
            }
        }
    }
}

pub fn stream(seed: PathSeed, tag: StreamTag) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.base);
    rng.set_stream(seed.index << 16 | tag.code());
    rng
}
