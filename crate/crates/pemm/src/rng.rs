//! Seed derivation: every random stream in the crate flows from one root seed
//! plus a purpose label, so subsystems are independently reproducible.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e3779b97f4a7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Deterministically mixes a root seed with a purpose label.
pub fn derive_seed(root: u64, label: &str) -> u64 {
    let mut state = root ^ 0x6a09e667f3bcc908;
    let mut out = splitmix64(&mut state);
    for &b in label.as_bytes() {
        state ^= u64::from(b);
        out ^= splitmix64(&mut state);
    }
    out
}

/// A ChaCha stream seeded from `(root, label)`. ChaCha output is stable
/// across platforms, which keeps runs bit-reproducible.
pub fn seeded_rng(root: u64, label: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(root, label))
}

/// One N(0, 1) draw.
pub fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}
