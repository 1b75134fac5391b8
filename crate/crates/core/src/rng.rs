//! Named random substreams derived from one master seed.
//!
//! Each consumer asks for `(label, index)`; the stream depends only on the
//! master seed and that pair, never on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for the stage called `label`.
pub fn stage_seed(master: u64, label: &str) -> u64 {
    label.bytes().fold(splitmix64(master), |acc, b| splitmix64(acc ^ u64::from(b)))
}

/// Generator for item `index` of a stage seeded with `seed`.
pub fn substream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}
