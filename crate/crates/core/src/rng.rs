//! Deterministic random numbers with an exactly serialisable state.
//!
//! Checkpoints must round-trip the generator bit-exactly, so the state is a
//! plain `[u64; 4]` (xoshiro256++) rather than an opaque external type.
//! Normal deviates use a non-caching Box-Muller transform so the snapshot
//! carries no hidden half-pair.

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rng {
    state: [u64; 4],
}

fn splitmix64(x: &mut u64) -> u64 {
    *x = x.wrapping_add(0x9e3779b97f4a7c15);
    let mut z = *x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

impl Rng {
    pub fn seed_from(seed: u64) -> Self {
        let mut s = seed;
        let state = [
            splitmix64(&mut s),
            splitmix64(&mut s),
            splitmix64(&mut s),
            splitmix64(&mut s),
        ];
        Rng { state }
    }

    /// Derive an independent stream, e.g. one per sweep cell or per eval
    /// point. Mixes the index through SplitMix64 so neighbouring indices do
    /// not produce correlated seeds.
    pub fn derive(master_seed: u64, index: u64) -> Self {
        let mut s = master_seed ^ 0xa076_1d64_78bd_642f_u64.wrapping_mul(index.wrapping_add(1));
        let folded = splitmix64(&mut s) ^ index.rotate_left(17);
        Rng::seed_from(folded)
    }

    pub fn snapshot(&self) -> [u64; 4] {
        self.state
    }

    pub fn restore(state: [u64; 4]) -> Self {
        Rng { state }
    }

    pub fn next_u64(&mut self) -> u64 {
        let s = &mut self.state;
        let result = s[0].wrapping_add(s[3]).rotate_left(23).wrapping_add(s[0]);
        let t = s[1] << 17;
        s[2] ^= s[0];
        s[3] ^= s[1];
        s[1] ^= s[2];
        s[0] ^= s[3];
        s[2] ^= t;
        s[3] = s[3].rotate_left(45);
        result
    }

    /// Uniform in [0, 1) with 53 bits of precision.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in [lo, hi).
    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Standard normal deviate (Box-Muller, no caching).
    pub fn normal(&mut self) -> f64 {
        // uniform() can return exactly 0; shift into (0, 1].
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    pub fn fill_uniform_in(&mut self, out: &mut [f64], lo: f64, hi: f64) {
        for v in out {
            *v = self.uniform_in(lo, hi);
        }
    }
}
