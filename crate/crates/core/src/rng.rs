//! Deterministic counter-based random streams.
//!
//! Every randomized computation in the crate draws from `CounterRng`, a
//! SplitMix64-style generator: the state advances by a fixed odd increment
//! and each output is a bijective 64-bit mix of the state. Independent
//! streams for (seed, stream id) pairs are derived by hashing both values
//! through the same mixer, so per-claim and per-replicate streams can be
//! consumed in any order (or in parallel) without changing results.

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;
const MIX_1: u64 = 0xBF58_476D_1CE4_E5B9;
const MIX_2: u64 = 0x94D0_49BB_1331_11EB;
const STREAM_SALT: u64 = 0xD2B7_4407_B1CE_6E93;

/// SplitMix64 finalizer: a bijective avalanche mix of a 64-bit word.
#[inline]
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(MIX_1);
    z = (z ^ (z >> 27)).wrapping_mul(MIX_2);
    z ^ (z >> 31)
}

#[derive(Debug, Clone)]
pub struct CounterRng {
    state: u64,
}

impl CounterRng {
    pub fn new(seed: u64) -> Self {
        Self { state: mix(seed) }
    }

    /// Stream `stream` of `seed`: decorrelated from every other stream of the
    /// same seed and from other seeds.
    pub fn derive(seed: u64, stream: u64) -> Self {
        Self {
            state: mix(seed) ^ mix(stream.wrapping_mul(STREAM_SALT).wrapping_add(GOLDEN)),
        }
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN);
        mix(self.state)
    }

    /// Uniform in the open interval (0, 1): 53-bit mantissa shifted by half
    /// an ulp so 0 and 1 are unreachable (safe for quantile transforms).
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        ((self.next_u64() >> 11) as f64 + 0.5) * (1.0 / 9007199254740992.0)
    }

    #[inline]
    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.next_f64() < p
    }

    /// Uniform integer in [0, bound), rejection-free bias removed by the
    /// threshold method. `bound` must be nonzero.
    pub fn below(&mut self, bound: u64) -> u64 {
        debug_assert!(bound > 0);
        let threshold = bound.wrapping_neg() % bound;
        loop {
            let r = self.next_u64();
            if r >= threshold {
                return r % bound;
            }
        }
    }

    /// Standard normal via the inverse CDF; deterministic and portable.
    pub fn normal(&mut self) -> f64 {
        let u = self.next_f64();
        // u is strictly inside (0,1), so the quantile cannot fail.
        crate::numerics::normal_quantile(u).expect("uniform draw in (0,1)")
    }

    pub fn lognormal(&mut self, mu_log: f64, sigma_log: f64) -> f64 {
        (mu_log + sigma_log * self.normal()).exp()
    }

    /// Gamma(shape, scale) by Marsaglia-Tsang squeeze; shapes below 1 use the
    /// boosting identity G(a) = G(a+1) * U^(1/a).
    pub fn gamma(&mut self, shape: f64, scale: f64) -> f64 {
        debug_assert!(shape > 0.0 && scale > 0.0);
        if shape < 1.0 {
            let boost = self.next_f64().powf(1.0 / shape);
            return self.gamma(shape + 1.0, scale) * boost;
        }
        let d = shape - 1.0 / 3.0;
        let c = 1.0 / (3.0 * d.sqrt());
        loop {
            let x = self.normal();
            let v = 1.0 + c * x;
            if v <= 0.0 {
                continue;
            }
            let v = v * v * v;
            let u = self.next_f64();
            if u < 1.0 - 0.0331 * x * x * x * x {
                return d * v * scale;
            }
            if u.ln() < 0.5 * x * x + d * (1.0 - v + v.ln()) {
                return d * v * scale;
            }
        }
    }

    /// Beta(a, b) as a ratio of gammas.
    pub fn beta(&mut self, a: f64, b: f64) -> f64 {
        let x = self.gamma(a, 1.0);
        let y = self.gamma(b, 1.0);
        x / (x + y)
    }
}

/// Hashes (seed, stream) to a fresh 64-bit subseed; used where a component
/// needs to hand independent seeds to nested machinery.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    mix(seed) ^ mix(stream.wrapping_mul(STREAM_SALT).wrapping_add(GOLDEN))
}
