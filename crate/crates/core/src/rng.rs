//! Seeded random substreams.
//!
//! Every random quantity is drawn from a ChaCha stream keyed by
//! `(seed, domain)` and selected by an index (usually a column), so a
//! column's draws do not depend on the order in which columns are generated.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Separates the streams used for different purposes under one seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    Features = 0x5eed_0001,
    Flips = 0x5eed_0002,
    Candidates = 0x5eed_0004,
}

/// Returns the generator for substream `index` of `(seed, domain)`.
pub fn substream(seed: u64, domain: Domain, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(mix(seed, domain as u64));
    rng.set_stream(index);
    rng
}

/// Derives a child seed, used to split one user seed into train/test/flip seeds.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    mix(seed, tag)
}

// splitmix64 finalizer over the xor of the inputs
fn mix(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
