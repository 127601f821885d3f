//! Counter-based random substreams.
//!
//! Every random quantity in the crate is drawn from a ChaCha stream whose key
//! is derived from a master seed and a tuple of integer tags. Work items can
//! therefore be evaluated in any order, on any thread, with identical results.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The stream type handed to samplers.
pub type Stream = ChaCha8Rng;

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

/// One round of the splitmix64 finalizer.
#[inline]
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Combine a key with a tag. Not symmetric in its arguments.
#[inline]
pub fn mix(key: u64, tag: u64) -> u64 {
    splitmix64(key ^ splitmix64(tag.wrapping_mul(GOLDEN).wrapping_add(0x632b_e59b_d9b4_e019)))
}

/// Fold a sequence of tags into a key.
pub fn derive_key(seed: u64, tags: &[u64]) -> u64 {
    tags.iter().fold(splitmix64(seed), |k, &t| mix(k, t))
}

/// Independent stream addressed by `(seed, tags)`.
pub fn substream(seed: u64, tags: &[u64]) -> Stream {
    let mut state = derive_key(seed, tags);
    let mut bytes = [0u8; 32];
    for chunk in bytes.chunks_exact_mut(8) {
        state = splitmix64(state);
        chunk.copy_from_slice(&state.to_le_bytes());
    }
    ChaCha8Rng::from_seed(bytes)
}

/// Stable mapping of a signed site index to a tag.
#[inline]
pub fn site_tag(k: i64) -> u64 {
    k as u64
}
