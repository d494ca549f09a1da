//! Counter-based random streams.
//!
//! Every word is a pure function of `(seed, counter)`: the SplitMix64
//! finalizer applied to `key(seed) + counter * GOLDEN`. This gives a
//! 2^64 period per stream, random access into the sequence (so large
//! fills can be split across workers without changing the output), and
//! cheap derivation of child streams.

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
pub(crate) fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic random stream identified by `(seed, counter)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RngStream {
    seed: u64,
    counter: u64,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self { seed, counter: 0 }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn counter(&self) -> u64 {
        self.counter
    }

    /// Word at an absolute position; does not touch the counter.
    #[inline]
    pub fn word_at(&self, position: u64) -> u64 {
        let key = mix64(self.seed ^ GOLDEN);
        mix64(key.wrapping_add(position.wrapping_add(1).wrapping_mul(GOLDEN)))
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        let w = self.word_at(self.counter);
        self.counter = self.counter.wrapping_add(1);
        w
    }

    /// Skip `n` words.
    pub fn advance(&mut self, n: u64) {
        self.counter = self.counter.wrapping_add(n);
    }

    /// Uniform in [0, 1) with 53 random bits.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        unit_closed_open(self.next_u64())
    }

    /// Uniform integer in `0..n`.
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "below(0)");
        ((self.next_u64() as u128 * n as u128) >> 64) as u64
    }

    /// One standard normal variate (consumes two words).
    pub fn normal(&mut self) -> f64 {
        let a = self.next_u64();
        let b = self.next_u64();
        box_muller(a, b).0
    }

    /// Child stream keyed by `index`. Does not advance `self`.
    pub fn split(&self, index: u64) -> RngStream {
        let s = mix64(self.seed.wrapping_add(GOLDEN)) ^ mix64(index.wrapping_mul(GOLDEN) ^ 0xD1B5_4A32_D192_ED03);
        RngStream::new(mix64(s))
    }

    /// Child stream whose key is drawn from `self` (advances by one word).
    pub fn fork(&mut self) -> RngStream {
        let w = self.next_u64();
        RngStream::new(mix64(w ^ self.seed))
    }
}

#[inline]
pub(crate) fn unit_closed_open(w: u64) -> f64 {
    (w >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

#[inline]
pub(crate) fn unit_open_closed(w: u64) -> f64 {
    ((w >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Box–Muller pair from two raw words.
#[inline]
pub(crate) fn box_muller(a: u64, b: u64) -> (f64, f64) {
    let u1 = unit_open_closed(a);
    let u2 = unit_closed_open(b);
    let r = (-2.0 * u1.ln()).sqrt();
    let (s, c) = (std::f64::consts::TAU * u2).sin_cos();
    (r * c, r * s)
}
