//! Seed derivation for independent, order-free random streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes a base seed with a label and a list of integer coordinates.
///
/// The result depends only on its arguments, so streams derived for
/// (seed, epoch, session id) are identical no matter in which order
/// sessions are visited.
pub fn derive_seed(base: u64, label: &str, coords: &[u64]) -> u64 {
    let mut h = FNV_OFFSET ^ splitmix(base);
    for b in label.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    for &c in coords {
        h = splitmix(h ^ splitmix(c));
    }
    h
}

pub fn stream(base: u64, label: &str, coords: &[u64]) -> StreamRng {
    StreamRng::seed_from_u64(derive_seed(base, label, coords))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derivation_is_stable_and_separates_labels() {
        assert_eq!(derive_seed(7, "a", &[1, 2]), derive_seed(7, "a", &[1, 2]));
        assert_ne!(derive_seed(7, "a", &[1, 2]), derive_seed(7, "b", &[1, 2]));
        assert_ne!(derive_seed(7, "a", &[1, 2]), derive_seed(7, "a", &[2, 1]));
        assert_ne!(derive_seed(7, "a", &[]), derive_seed(8, "a", &[]));
    }
}
