//! Seed derivation.
//!
//! Every random stream in the toolkit comes from one root seed. A sub-seed is
//! `splitmix64(root ^ fnv1a(tag))`, so each subsystem can be reproduced in
//! isolation by knowing only the root seed and its tag (for example
//! `"data/epoch/3"` or `"mask/epoch/0/batch/7"`).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// One step of the splitmix64 generator; advances `state`.
pub fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(GOLDEN);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a(tag: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in tag.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

pub fn derive(root: u64, tag: &str) -> u64 {
    let mut state = root ^ fnv1a(tag);
    splitmix64(&mut state)
}

pub fn rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn derived_rng(root: u64, tag: &str) -> Rng {
    rng(derive(root, tag))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splitmix_reference_sequence() {
        // Reference values for seed 0 from the published splitmix64 generator.
        let mut s = 0u64;
        assert_eq!(splitmix64(&mut s), 0xE220_A839_7B1D_CDAF);
        assert_eq!(splitmix64(&mut s), 0x6E78_9E6A_A1B9_65F4);
    }

    #[test]
    fn tags_separate_streams() {
        assert_ne!(derive(7, "data"), derive(7, "mask"));
        assert_eq!(derive(7, "data"), derive(7, "data"));
        assert_ne!(derive(7, "data"), derive(8, "data"));
    }
}
