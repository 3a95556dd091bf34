//! Counter-based random streams.
//!
//! Every random draw in the simulator comes from a stream addressed by
//! `(seed, domain, index)`, so any step or angle point can be regenerated on
//! its own and evaluated in parallel without changing results.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const DOMAIN_SMF_DRIFT: u64 = 1;
pub const DOMAIN_PMF_JITTER: u64 = 2;
pub const DOMAIN_COUNTS: u64 = 3;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive an independent seed from `seed` and a label, e.g. one per arm.
pub fn derive_seed(seed: u64, label: &str) -> u64 {
    label.bytes().fold(mix(seed ^ GOLDEN), |acc, b| {
        mix(acc ^ u64::from(b).wrapping_mul(GOLDEN))
    })
}

/// The stream for draw `index` within `domain`.
pub fn stream(seed: u64, domain: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(mix(seed ^ domain.wrapping_mul(GOLDEN)));
    rng.set_stream(index);
    rng
}
