//! Deterministic pseudo-random primitives shared by corpus splitting, model
//! initialization, and out-of-vocabulary embedding synthesis.
//!
//! Everything here is part of the reproducibility contract: two runs (or two
//! independent implementations) given the same seeds must produce identical
//! splits, initial parameters, and OOV vectors. For that reason the exact
//! algorithms are spelled out below instead of delegating to an external RNG
//! crate whose stream could change between versions.

/// SplitMix64 generator (Steele, Lea & Flood; Vigna's reference constants).
///
/// Update rule per draw:
///
/// ```text
/// state += 0x9E3779B97F4A7C15
/// z = state
/// z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
/// z = (z ^ (z >> 27)) * 0x94D049BB133111EB
/// output = z ^ (z >> 31)
/// ```
///
/// All arithmetic is modulo 2^64.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        SplitMix64 { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform double in `[0, 1)` built from the top 53 bits of one draw.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform double in `[lo, hi)`.
    pub fn next_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }
}

/// In-place Fisher–Yates shuffle driven by [`SplitMix64`].
///
/// Iterates `i` from `len - 1` down to `1` and swaps index `i` with
/// `j = next_u64() mod (i + 1)`. The modulo reduction is part of the
/// documented contract.
pub fn fisher_yates<T>(items: &mut [T], rng: &mut SplitMix64) {
    for i in (1..items.len()).rev() {
        let j = (rng.next_u64() % (i as u64 + 1)) as usize;
        items.swap(i, j);
    }
}

/// FNV-1a 64-bit hash over a byte string.
///
/// Used to derive per-word seeds for OOV embedding vectors:
/// `hash = 0xCBF29CE484222325`, then for each byte
/// `hash = (hash ^ byte) * 0x100000001B3` modulo 2^64.
pub fn fnv1a_64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xCBF2_9CE4_8422_2325;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01B3);
    }
    hash
}
