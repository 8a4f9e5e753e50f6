//! Deterministic counter-based random number generation.
//!
//! Every random decision in this crate flows through an explicit [`RngState`].
//! The generator is the SplitMix64 finalizer applied to `seed + counter * GAMMA`,
//! a pure function of `(seed, counter)`, so the stream is reproducible across
//! platforms, threads, and runs. There is no global RNG anywhere.
//!
//! Transcendental steps (the Gaussian draw) go through `libm` rather than the
//! platform math library so the produced bits are identical on every target.

const GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// Counter-based generator state. Copy it to fork, pass `&mut` to advance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngState {
    pub seed: u64,
    pub counter: u64,
}

fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RngState {
    pub fn new(seed: u64) -> Self {
        Self { seed, counter: 0 }
    }

    pub fn with_counter(seed: u64, counter: u64) -> Self {
        Self { seed, counter }
    }

    /// Derives an independent stream, for giving subtasks (ensemble members,
    /// worker threads) their own generators without sharing state.
    pub fn derive(&self, stream: u64) -> RngState {
        RngState::new(mix(self.seed ^ mix(stream.wrapping_add(GAMMA))))
    }

    pub fn next_u64(&mut self) -> u64 {
        let z = self.seed.wrapping_add(self.counter.wrapping_mul(GAMMA));
        self.counter = self.counter.wrapping_add(1);
        mix(z)
    }

    /// Uniform in `[0, 1)` with 53 random bits.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `[lo, hi)`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Unbiased uniform integer in `[0, n)` via rejection sampling.
    pub fn next_below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "next_below(0)");
        let threshold = u64::MAX - (u64::MAX % n);
        loop {
            let v = self.next_u64();
            if v < threshold {
                return v % n;
            }
        }
    }

    pub fn next_bool(&mut self, p: f64) -> bool {
        self.next_f64() < p
    }

    /// Standard normal via Box-Muller. Consumes two uniform draws per call.
    pub fn next_gaussian(&mut self) -> f64 {
        // First uniform is shifted into (0, 1] so the log argument is never 0.
        let u1 = ((self.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64);
        let u2 = self.next_f64();
        let r = libm::sqrt(-2.0 * libm::log(u1));
        r * libm::cos(2.0 * std::f64::consts::PI * u2)
    }

    /// Fills a buffer with standard normal draws.
    pub fn fill_gaussian(&mut self, out: &mut [f64]) {
        for v in out.iter_mut() {
            *v = self.next_gaussian();
        }
    }

    /// In-place Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.next_below(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }
}
