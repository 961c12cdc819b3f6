use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Seeded, restorable random source. All randomness in the crate (weight
/// init, dropout masks, data synthesis, attribute masking) flows through one
/// of these so runs are reproducible and resumable.
pub struct SeededRng {
    seed: u64,
    rng: ChaCha8Rng,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        SeededRng {
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Rebuilds a generator at an exact stream position.
    pub fn restore(seed: u64, word_pos: u128) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_word_pos(word_pos);
        SeededRng { seed, rng }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn word_pos(&self) -> u128 {
        self.rng.get_word_pos()
    }

    /// Uniform in [0, 1).
    pub fn uniform01(&mut self) -> f32 {
        self.rng.random::<f32>()
    }

    pub fn uniform(&mut self, lo: f32, hi: f32) -> f32 {
        lo + (hi - lo) * self.uniform01()
    }

    pub fn fill_uniform(&mut self, buf: &mut [f32], lo: f32, hi: f32) {
        for v in buf.iter_mut() {
            *v = self.uniform(lo, hi);
        }
    }

    pub fn uniform_usize(&mut self, n: usize) -> usize {
        self.rng.random_range(0..n)
    }

    /// Standard normal via Box-Muller.
    pub fn normal(&mut self, mean: f32, std: f32) -> f32 {
        let u1 = self.uniform01().max(1e-12);
        let u2 = self.uniform01();
        let z = (-2.0 * u1.ln()).sqrt() * (2.0 * std::f32::consts::PI * u2).cos();
        mean + std * z
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.rng.random_range(0..=i);
            items.swap(i, j);
        }
    }
}
