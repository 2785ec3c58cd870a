//! Counter-based random streams.
//!
//! Every draw is a pure function of `(master_seed, stream_id, draw_index)`.
//! The keystream is ChaCha8: the master seed is expanded into the cipher key,
//! the stream id selects the ChaCha stream, and draw `k` occupies words
//! `2k, 2k + 1` of that stream. Replicates and parallel lanes therefore never
//! share generator state and can be evaluated in any order.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::normal;

/// Identifies one independent random stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SeedSpec {
    pub master_seed: u64,
    pub stream_id: u64,
}

impl SeedSpec {
    pub const fn new(master_seed: u64, stream_id: u64) -> Self {
        Self {
            master_seed,
            stream_id,
        }
    }

    /// A sub-stream for a named component of one sample (e.g. the spike vector
    /// and the noise matrix of a spiked draw).
    pub fn derive(&self, tag: u64) -> Self {
        Self {
            master_seed: self.master_seed,
            stream_id: stable_hash(&[self.stream_id, tag]),
        }
    }

    pub fn rng(&self) -> StreamRng {
        StreamRng::new(*self)
    }
}

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(GOLDEN);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Platform-independent 64-bit hash of a word sequence.
pub fn stable_hash(words: &[u64]) -> u64 {
    let mut state = 0x6A09_E667_F3BC_C908u64 ^ (words.len() as u64);
    let mut acc = splitmix64(&mut state);
    for &w in words {
        state ^= w;
        acc = acc.rotate_left(23) ^ splitmix64(&mut state);
    }
    acc
}

/// Deterministic random stream keyed by a [`SeedSpec`].
#[derive(Debug, Clone)]
pub struct StreamRng {
    inner: ChaCha8Rng,
}

impl StreamRng {
    pub fn new(seed: SeedSpec) -> Self {
        let mut state = seed.master_seed;
        let mut key = [0u8; 32];
        for chunk in key.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        let mut inner = ChaCha8Rng::from_seed(key);
        inner.set_stream(seed.stream_id);
        Self { inner }
    }

    /// Position the stream so the next draw is draw number `index`.
    pub fn seek(&mut self, index: u64) {
        self.inner.set_word_pos(u128::from(index) * 2);
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform draw on the open interval (0, 1); never returns an endpoint.
    pub fn uniform(&mut self) -> f64 {
        ((self.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal draw by inverse-CDF transform of one uniform.
    pub fn gaussian(&mut self) -> f64 {
        normal::inv_cdf_fast(self.uniform())
    }

    pub fn fill_gaussian(&mut self, out: &mut [f64]) {
        for x in out {
            *x = self.gaussian();
        }
    }

    /// Access to the raw generator for `rand_distr` samplers that need more
    /// than one uniform per variate (chi-square, gamma).
    pub fn raw(&mut self) -> &mut impl Rng {
        &mut self.inner
    }
}
