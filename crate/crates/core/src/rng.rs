//! Deterministic random streams.
//!
//! Every random decision in a run draws from a ChaCha8 stream whose seed is a
//! hash of the run seed and a tuple of coordinates (purpose, round, client).
//! Streams are therefore independent of evaluation order and thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Purpose tags mixed into stream seeds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Data = 1,
    Init = 2,
    Select = 3,
    LocalTrain = 4,
    Probe = 5,
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Hash `(run_seed, stream, round, client)` into a 64-bit seed.
pub fn stream_seed(run_seed: u64, stream: Stream, round: u64, client: u64) -> u64 {
    let mut h = splitmix64(run_seed);
    h = splitmix64(h ^ stream as u64);
    h = splitmix64(h ^ round);
    splitmix64(h ^ client)
}

pub fn stream_rng(run_seed: u64, stream: Stream, round: u64, client: u64) -> SimRng {
    SimRng::seed_from_u64(stream_seed(run_seed, stream, round, client))
}

pub fn seeded(seed: u64) -> SimRng {
    SimRng::seed_from_u64(seed)
}
