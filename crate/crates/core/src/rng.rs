//! Deterministic seed derivation for parallel Monte Carlo work.
//!
//! Every randomized operation in this crate takes a single `u64` seed and
//! derives independent sub-streams with [`substream`]. Derivation is
//! counter-based (the SplitMix64 finalizer folded over a path of indices), so
//! workers may run in any order, on any number of threads, without changing
//! results.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// RNG used throughout the crate. Always seeded from a sub-stream, never from
/// OS entropy.
pub type SubRng = ChaCha8Rng;

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of the sub-stream identified by `path` under `master`.
///
/// A pure function of its arguments; distinct paths yield statistically
/// independent streams.
pub fn substream_seed(master: u64, path: &[u64]) -> u64 {
    let mut state = mix(master.wrapping_add(GOLDEN_GAMMA));
    for &step in path {
        state = mix(state ^ mix(step.wrapping_add(GOLDEN_GAMMA)));
    }
    state
}

/// An RNG positioned at the sub-stream identified by `path`.
pub fn substream(master: u64, path: &[u64]) -> SubRng {
    SubRng::seed_from_u64(substream_seed(master, path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::RngCore;

    #[test]
    fn substreams_are_deterministic() {
        let a = substream(42, &[1, 2, 3]).next_u64();
        let b = substream(42, &[1, 2, 3]).next_u64();
        assert_eq!(a, b);
    }

    #[test]
    fn distinct_paths_differ() {
        assert_ne!(substream_seed(42, &[0]), substream_seed(42, &[1]));
        assert_ne!(substream_seed(42, &[0]), substream_seed(42, &[0, 0]));
        assert_ne!(substream_seed(42, &[]), substream_seed(43, &[]));
    }
}
