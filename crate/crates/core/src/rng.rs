//! Seeded random streams.
//!
//! Every stream is a ChaCha12 keystream addressed by `(seed, stream id, word
//! position)`, so any draw can be located without replaying the ones before
//! it. Chains use one stream each and consume a fixed number of words per
//! step, which makes a chain's noise a pure function of
//! `(master seed, chain index, step index)`.
//!
//! Normals come from the Box–Muller transform below rather than a library
//! sampler so the mapping from keystream words to variates is fixed here.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;

/// Stream-id namespaces. Each namespace owns 2^56 consecutive stream ids.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    ChainNoise = 1,
    ChainInit = 2,
    GroundTruth = 3,
    Training = 4,
    Overlap = 5,
    Diagnostics = 6,
}

const DOMAIN_SHIFT: u32 = 56;

/// A positioned random stream.
#[derive(Clone, Debug)]
pub struct Stream {
    inner: ChaCha12Rng,
}

impl Stream {
    pub fn new(seed: u64, domain: Domain, index: u64) -> Self {
        debug_assert!(index < (1 << DOMAIN_SHIFT));
        let mut inner = ChaCha12Rng::seed_from_u64(seed);
        inner.set_stream(((domain as u64) << DOMAIN_SHIFT) | index);
        Self { inner }
    }

    /// Stream for chain `chain`, positioned at the start of step `step` for a
    /// `dim`-dimensional state.
    pub fn chain_noise(seed: u64, chain: u64, step: u64, dim: usize) -> Self {
        let mut s = Self::new(seed, Domain::ChainNoise, chain);
        s.seek_words(step as u128 * words_per_normal_vector(dim));
        s
    }

    pub fn seek_words(&mut self, pos: u128) {
        self.inner.set_word_pos(pos);
    }

    pub fn word_pos(&self) -> u128 {
        self.inner.get_word_pos()
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform on [0, 1) with 53 random bits.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform on (0, 1].
    fn uniform_open0(&mut self) -> f64 {
        ((self.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `0..n` (Lemire's nearly-divisionless rejection).
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0);
        let n = n as u64;
        loop {
            let m = (self.next_u64() as u128) * (n as u128);
            let lo = m as u64;
            if lo >= n.wrapping_neg() % n {
                return (m >> 64) as usize;
            }
        }
    }

    /// One Box–Muller pair.
    pub fn normal_pair(&mut self) -> (f64, f64) {
        let u1 = self.uniform_open0();
        let u2 = self.uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = std::f64::consts::TAU * u2;
        (r * theta.cos(), r * theta.sin())
    }

    pub fn normal(&mut self) -> f64 {
        self.normal_pair().0
    }

    /// Fills `out` with independent standard normals, consuming exactly
    /// `words_per_normal_vector(out.len())` keystream words.
    pub fn fill_normal(&mut self, out: &mut [f64]) {
        let mut chunks = out.chunks_exact_mut(2);
        for pair in &mut chunks {
            let (a, b) = self.normal_pair();
            pair[0] = a;
            pair[1] = b;
        }
        if let [last] = chunks.into_remainder() {
            *last = self.normal_pair().0;
        }
    }

    pub fn normal_vec(&mut self, dim: usize) -> Vec<f64> {
        let mut v = vec![0.0; dim];
        self.fill_normal(&mut v);
        v
    }

    /// Index drawn from the categorical distribution `weights` (sum 1).
    pub fn categorical(&mut self, weights: &[f64]) -> usize {
        let u = self.uniform();
        let mut acc = 0.0;
        for (i, w) in weights.iter().enumerate() {
            acc += w;
            if u < acc {
                return i;
            }
        }
        weights.len() - 1
    }
}

/// 32-bit keystream words consumed by `fill_normal` for a vector of `dim`.
pub fn words_per_normal_vector(dim: usize) -> u128 {
    // two u64 per Box–Muller pair, two words per u64
    (dim.div_ceil(2) * 4) as u128
}
