//! Deterministic per-replicate random streams.
//!
//! Every replicate owns its own [`Stream`], seeded from a 64-bit mix of the
//! experiment seed, a domain tag and the replicate index. Results therefore do
//! not depend on scheduling or thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Stream = ChaCha8Rng;

/// Domain tags keep independent families of streams apart.
pub mod domain {
    pub const PATHS: u64 = 0x5041_5448;
    pub const LIMIT: u64 = 0x4c49_4d54;
}

/// SplitMix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn stream_seed(seed: u64, domain: u64, index: u64) -> u64 {
    splitmix64(splitmix64(seed ^ splitmix64(domain)).wrapping_add(index))
}

pub fn derive_stream(seed: u64, domain: u64, index: u64) -> Stream {
    Stream::seed_from_u64(stream_seed(seed, domain, index))
}
