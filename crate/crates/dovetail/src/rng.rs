//! Deterministic random streams.
//!
//! Every stochastic piece of the optimizer (objective noise, fallback
//! steps, retry draws) pulls from its own stream derived from the run seed
//! plus a list of integer tags (step index, sample index, purpose code, ...).
//! Streams are independent of evaluation order and of each other, so
//! re-running with the same seed reproduces every draw bit for bit no matter
//! how line searches branch.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// splitmix64 finalizer; good avalanche behaviour for key derivation.
#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Derive an independent random stream from `seed` and a tag path.
///
/// `stream(s, &[a, b])` and `stream(s, &[a, c])` are uncorrelated for
/// `b != c`; the mapping is pure, so callers can re-derive any stream at any
/// time without tracking generator state.
pub fn stream(seed: u64, tags: &[u64]) -> ChaCha12Rng {
    let mut state = splitmix64(seed ^ 0x6a09e667f3bcc908);
    for (i, &t) in tags.iter().enumerate() {
        state = splitmix64(state ^ splitmix64(t.wrapping_add(i as u64 + 1)));
    }
    let mut key = [0u8; 32];
    for chunk in 0..4 {
        state = splitmix64(state);
        key[chunk * 8..(chunk + 1) * 8].copy_from_slice(&state.to_le_bytes());
    }
    ChaCha12Rng::from_seed(key)
}

/// Purpose codes for the first tag, keeping streams for different uses
/// disjoint even when their remaining tags collide.
pub mod purpose {
    /// Objective evaluation noise.
    pub const NOISE: u64 = 1;
    /// Random fallback step direction/length.
    pub const FALLBACK: u64 = 2;
    /// Random feasible starting designs.
    pub const INIT: u64 = 3;
}
