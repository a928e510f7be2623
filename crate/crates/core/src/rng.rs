//! Splittable, counter-based random streams.
//!
//! Every stochastic routine takes an explicit generator. Work that fans out
//! over shards derives one ChaCha stream per shard from `(seed, key...)`, so
//! results do not depend on how shards are scheduled onto workers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Generator for stream `key` under `seed`.
pub fn stream(seed: u64, key: &[u64]) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut id = 0x5EED_u64;
    for &k in key {
        id = splitmix(id ^ splitmix(k));
    }
    rng.set_stream(id);
    rng
}

/// Derive a child seed from a parent generator, for APIs that hand out
/// sub-streams to workers.
pub fn child_seed<R: rand::Rng + ?Sized>(rng: &mut R) -> u64 {
    rng.next_u64()
}
