//! Seed derivation.
//!
//! Every randomized component draws from its own ChaCha8 stream whose seed is
//! derived from a root seed and a component label:
//!
//! `seed(root, label) = splitmix64(root ^ fnv1a64(label))`
//!
//! Numeric sub-indices are appended to the label as `label/index`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const DERIVATION_RULE: &str = "seed(root, label) = splitmix64(root ^ fnv1a64(label)); \
sub-indices appended as label/index; generator ChaCha8";

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn derive(root: u64, label: &str) -> u64 {
    splitmix64(root ^ fnv1a64(label.as_bytes()))
}

pub fn derive_indexed(root: u64, label: &str, index: u64) -> u64 {
    derive(root, &format!("{label}/{index}"))
}

pub fn rng(root: u64, label: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(root, label))
}

pub fn rng_indexed(root: u64, label: &str, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_indexed(root, label, index))
}
