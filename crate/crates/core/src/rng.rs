//! Deterministic stream splitting.
//!
//! Every random quantity comes from a ChaCha8 generator keyed by the user seed
//! and a stream id `(purpose, chunk)`. Work is cut into fixed-size chunks, so
//! results are identical whether chunks run on one thread or many.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Rows per parallel work unit.
pub const CHUNK: usize = 4096;

/// What a stream is used for; distinct purposes never share draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Hemisphere = 1,
    Resample = 2,
    Beta = 3,
    Gibbs = 4,
    Simulate = 5,
    Scan = 6,
}

pub fn stream_rng(seed: u64, purpose: Stream, chunk: u64) -> ChaCha8Rng {
    debug_assert!(chunk < 1 << 40);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((purpose as u64) << 40) | chunk);
    rng
}

/// Number of chunks covering `len` items.
pub fn chunk_count(len: usize) -> usize {
    len.div_ceil(CHUNK)
}
