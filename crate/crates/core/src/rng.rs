//! Deterministic seeding utilities.
//!
//! Every random quantity in the crate is derived from a 64-bit seed through
//! explicit, platform-independent mixing, so a run is a pure function of its
//! master seed. One master seed per trial is split into per-component
//! sub-streams (signal, matrix, noise, init) so each component is
//! independently reproducible.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// splitmix64 step; the standard 64-bit finalizer used as a stable mixer.
#[inline]
pub fn splitmix64(state: u64) -> u64 {
    let mut z = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives a stable seed from a master seed and a sequence of context words.
///
/// Unlike `std`'s hasher this function is fixed for all time; CSV replays and
/// cross-run fixtures depend on it never changing.
pub fn stable_seed(master: u64, parts: &[u64]) -> u64 {
    let mut h = splitmix64(master ^ 0x51a2_c353_97d4_a8f5);
    for &p in parts {
        h = splitmix64(h ^ p);
    }
    h
}

/// Stream identifiers for the per-trial components.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Component {
    Signal = 0,
    Matrix = 1,
    Noise = 2,
    Init = 3,
}

/// Per-trial RNG bundle: one independent ChaCha stream per component.
pub struct TrialStreams {
    seed: u64,
}

impl TrialStreams {
    pub fn new(trial_seed: u64) -> Self {
        TrialStreams { seed: trial_seed }
    }

    pub fn component(&self, which: Component) -> ChaCha12Rng {
        let mut rng = ChaCha12Rng::seed_from_u64(self.seed);
        rng.set_stream(which as u64);
        rng
    }

    /// Seed word for the sensing matrix; the matrix type regenerates itself
    /// from `(m, n, seed)` alone, so it gets a derived word rather than a stream.
    pub fn matrix_seed(&self) -> u64 {
        stable_seed(self.seed, &[Component::Matrix as u64])
    }
}
