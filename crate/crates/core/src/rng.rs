//! Counter-based pseudo-random numbers.
//!
//! A stream is identified by a 64-bit key. Draw `n` (0-based) of the stream
//! with key `k` is `mix64(k + (n + 1) * GAMMA)`, where `mix64` is the
//! SplitMix64 finalizer and `GAMMA = 0x9e3779b97f4a7c15`. This is exactly the
//! SplitMix64 sequence seeded with `k`, so any language with wrapping 64-bit
//! arithmetic reproduces it. Keys for sub-streams are derived by folding tags
//! into the seed with [`derive_key`].
//!
//! Conversions:
//! * uniform `f64` in `[0, 1)`: top 53 bits times `2^-53`;
//! * integer below `n`: `(x as u128 * n) >> 64`;
//! * standard normal: Box-Muller, cosine branch only, `u1 = 1 - uniform`.

const GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// `key = mix64(seed)`, then for each tag `key = mix64(key ^ mix64(tag + GAMMA))`.
pub fn derive_key(seed: u64, tags: &[u64]) -> u64 {
    tags.iter().fold(mix64(seed), |key, &tag| {
        mix64(key ^ mix64(tag.wrapping_add(GAMMA)))
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CounterRng {
    key: u64,
    counter: u64,
}

impl CounterRng {
    pub fn new(key: u64) -> Self {
        Self { key, counter: 0 }
    }

    /// Sub-stream for `(seed, tags...)`.
    pub fn derive(seed: u64, tags: &[u64]) -> Self {
        Self::new(derive_key(seed, tags))
    }

    pub fn key(&self) -> u64 {
        self.key
    }

    pub fn counter(&self) -> u64 {
        self.counter
    }

    #[inline]
    pub fn at(key: u64, counter: u64) -> u64 {
        mix64(key.wrapping_add(counter.wrapping_add(1).wrapping_mul(GAMMA)))
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        let v = Self::at(self.key, self.counter);
        self.counter = self.counter.wrapping_add(1);
        v
    }

    #[inline]
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Integer in `[0, n)`. `n` must be positive.
    #[inline]
    pub fn below(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        ((self.next_u64() as u128 * n as u128) >> 64) as usize
    }

    pub fn bernoulli_half(&mut self) -> bool {
        self.next_u64() >> 63 == 1
    }

    pub fn normal(&mut self) -> f64 {
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// Fisher-Yates, swapping `i` with `below(i + 1)` for `i` from the end.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}
