//! Named, seedable random streams.
//!
//! All randomness in the simulator flows through [`derive_rng`]: a stream is
//! identified by the root seed of the run, a static purpose tag, and zero or
//! more indices (round, client, class, ...). Two distinct stream ids yield
//! independent ChaCha8 generators, so parallel work (per-class partitioning,
//! per-client training, per-client privatization) never shares RNG state and
//! results do not depend on scheduling order.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// 64-bit finalizer used to chain the stream-id components together.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn tag_hash(tag: &str) -> u64 {
    // FNV-1a over the tag bytes.
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for b in tag.bytes() {
        h = (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Derive the 64-bit seed of the stream `(root, tag, indices...)`.
pub fn derive_seed(root: u64, tag: &str, indices: &[u64]) -> u64 {
    let mut state = mix(root ^ tag_hash(tag));
    for &ix in indices {
        state = mix(state ^ ix);
    }
    state
}

/// Instantiate the generator for the stream `(root, tag, indices...)`.
pub fn derive_rng(root: u64, tag: &str, indices: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(root, tag, indices))
}
