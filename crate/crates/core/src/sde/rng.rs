use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Stream identifiers used by the closed loop. Each purpose owns a disjoint
/// range of ChaCha stream ids so that, e.g., changing the filter sample count
/// never perturbs the truth noise.
pub mod streams {
    pub const TRUTH: u64 = 1;
    pub const OBSERVATION: u64 = 2;
    pub const CONTROLLER: u64 = 3;
    pub const FILTER: u64 = 4;
    pub const FILTER_INIT: u64 = 5;
    pub const PARTICLE: u64 = 6;
}

/// Reproducible random stream identified by `(seed, stream id)`.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream: u64,
    inner: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Self {
            seed,
            stream,
            inner,
        }
    }

    /// Stream for `purpose`, sub-indexed by `index` (time step, sample, ...).
    pub fn derive(seed: u64, purpose: u64, index: u64) -> Self {
        Self::new(seed, (purpose << 40) | (index & ((1 << 40) - 1)))
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    pub fn fill_standard_normal(&mut self, out: &mut [f64]) {
        for v in out.iter_mut() {
            *v = self.inner.sample(StandardNormal);
        }
    }

    /// Uniform draw on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    /// Uniform index in `0..n`.
    pub fn index(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}
