//! Seeded, replayable random streams.
//!
//! Every consumer of randomness derives its own ChaCha8 stream from
//! `(seed, domain, index)`, so the draw for stratum `s` (or replication `r`)
//! does not depend on the order in which other strata or replications are
//! visited.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Separates independent uses of the same master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Domain {
    Assignment = 0x6173_7369_676e_0001,
    Remainder = 0x7265_6d61_696e_0002,
    Replication = 0x7265_706c_6963_0003,
    Pilot = 0x7069_6c6f_7400_0004,
    Population = 0x706f_7075_6c00_0005,
    Method = 0x6d65_7468_6f64_0006,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Key a ChaCha8 stream on `(seed, domain)` and select stream `index`.
pub fn substream(seed: u64, domain: Domain, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(seed ^ domain as u64));
    rng.set_stream(index);
    rng
}

/// Derive a child seed, e.g. the assignment seed of method `m` in replication `r`.
pub fn derive_seed(seed: u64, domain: Domain, index: u64) -> u64 {
    splitmix64(splitmix64(seed ^ domain as u64) ^ splitmix64(index.wrapping_add(1)))
}
