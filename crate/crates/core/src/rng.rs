//! Seedable pseudo-random generator used everywhere in this workspace.
//!
//! Every stochastic routine in the crate draws from this one generator so
//! that a run is fully determined by its seed. The core is xoshiro256++
//! (public-domain constants by Blackman and Vigna) seeded through a
//! SplitMix64 expansion, so nearby seeds still yield decorrelated streams.
//! The integer stream is identical on every platform; float helpers apply
//! only IEEE arithmetic on top of it, except for the Gaussian transform
//! which goes through `ln`/`sin`/`cos` from the system math library.

const SPLITMIX_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(SPLITMIX_GAMMA);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// xoshiro256++ with a one-value Box-Muller cache for Gaussian draws.
#[derive(Debug, Clone)]
pub struct Rng {
    s: [u64; 4],
    cached_normal: Option<f64>,
}

impl Rng {
    /// Builds a generator from a 64-bit seed.
    pub fn seeded(seed: u64) -> Self {
        let mut sm = seed;
        let s = [
            splitmix64(&mut sm),
            splitmix64(&mut sm),
            splitmix64(&mut sm),
            splitmix64(&mut sm),
        ];
        Rng { s, cached_normal: None }
    }

    /// Derives the generator for a sub-task (a trial, a matrix draw, ...)
    /// from a run seed and a caller-chosen stream label. Label conventions
    /// are local to each caller; the only contract is that distinct labels
    /// give independent-looking streams and that the mapping is pure.
    pub fn derive(seed: u64, stream: u64) -> Self {
        Rng::seeded(seed ^ stream)
    }

    pub fn next_u64(&mut self) -> u64 {
        let result = self.s[0]
            .wrapping_add(self.s[3])
            .rotate_left(23)
            .wrapping_add(self.s[0]);
        let t = self.s[1] << 17;
        self.s[2] ^= self.s[0];
        self.s[3] ^= self.s[1];
        self.s[1] ^= self.s[2];
        self.s[0] ^= self.s[3];
        self.s[2] ^= t;
        self.s[3] = self.s[3].rotate_left(45);
        result
    }

    /// Uniform in [0, 1) with 53 significant bits.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in [lo, hi).
    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform index in 0..n (n > 0), via the widening-multiply trick.
    pub fn index(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        (((self.next_u64() as u128) * (n as u128)) >> 64) as usize
    }

    /// Fair coin as +1 / -1.
    pub fn sign(&mut self) -> f64 {
        if self.next_u64() >> 63 == 0 {
            1.0
        } else {
            -1.0
        }
    }

    /// Standard Gaussian via Box-Muller. Pairs are generated together and
    /// the second value cached, so the draw sequence is still a pure
    /// function of the seed.
    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.cached_normal.take() {
            return z;
        }
        // 1 - uniform() lies in (0, 1], keeping the log argument positive.
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        let radius = (-2.0 * u1.ln()).sqrt();
        let (sin, cos) = (std::f64::consts::TAU * u2).sin_cos();
        self.cached_normal = Some(radius * sin);
        radius * cos
    }
}
