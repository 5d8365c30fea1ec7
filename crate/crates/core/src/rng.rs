//! Seed derivation and the seeded generator used everywhere randomness appears.
//!
//! Every stream is a `ChaCha8Rng` seeded from a 64-bit value. Child seeds are
//! derived by folding labels into the parent with the SplitMix64 finalizer, so
//! a stream depends only on its parent seed and its labels: adding trials,
//! steps, or batch elements never perturbs an existing stream.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SeededRng = ChaCha8Rng;

/// SplitMix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a child seed from a parent seed and a sequence of labels.
pub fn derive_seed(parent: u64, labels: &[u64]) -> u64 {
    labels.iter().fold(splitmix64(parent), |acc, &label| {
        splitmix64(acc ^ splitmix64(label))
    })
}

pub fn rng_from_seed(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn derived_rng(parent: u64, labels: &[u64]) -> SeededRng {
    rng_from_seed(derive_seed(parent, labels))
}

/// Stream labels. Distinct tags keep the streams of different consumers apart.
pub mod tag {
    pub const INIT: u64 = 1;
    pub const BATCH: u64 = 2;
    pub const DROPOUT: u64 = 3;
    pub const PERTURB: u64 = 4;
    pub const TRIAL: u64 = 5;
    pub const ETO: u64 = 6;
    pub const IEO_CSO: u64 = 7;
    pub const IEO_QUANTILE: u64 = 8;
    pub const DATA: u64 = 9;
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn derivation_is_stable_and_label_sensitive() {
        assert_eq!(derive_seed(7, &[1, 2]), derive_seed(7, &[1, 2]));
        assert_ne!(derive_seed(7, &[1, 2]), derive_seed(7, &[2, 1]));
        assert_ne!(derive_seed(7, &[1]), derive_seed(8, &[1]));
        let a: u64 = derived_rng(3, &[4]).random();
        let b: u64 = derived_rng(3, &[4]).random();
        assert_eq!(a, b);
    }

    #[test]
    fn splitmix_reference_value() {
        // First output of the reference SplitMix64 generator seeded with 0.
        assert_eq!(splitmix64(0), 0xE220_A839_7B1D_CDAF);
    }
}
