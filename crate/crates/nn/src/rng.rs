use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Deterministic RNG whose full state round-trips through checkpoints.
///
/// ChaCha allows cheap save/restore via the (seed, word position) pair, so a
/// resumed run continues the exact stream it left off.
#[derive(Clone, Debug)]
pub struct SeededRng {
    seed: u64,
    inner: ChaCha8Rng,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct RngState {
    pub seed: u64,
    pub word_pos_hi: u64,
    pub word_pos_lo: u64,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        SeededRng {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Derives an independent stream; used to give sub-components their own
    /// reproducible randomness without coupling draw orders.
    pub fn derive(&self, salt: u64) -> SeededRng {
        SeededRng::new(self.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(salt))
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        self.inner.gen_range(lo..hi)
    }

    /// Uniform in `[0, 1)`.
    pub fn next_f64(&mut self) -> f64 {
        self.inner.gen::<f64>()
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    pub fn gen_range_usize(&mut self, n: usize) -> usize {
        self.inner.gen_range(0..n)
    }

    pub fn state(&self) -> RngState {
        let pos = self.inner.get_word_pos();
        RngState {
            seed: self.seed,
            word_pos_hi: (pos >> 64) as u64,
            word_pos_lo: pos as u64,
        }
    }

    pub fn restore(state: &RngState) -> Self {
        let mut rng = SeededRng::new(state.seed);
        let pos = ((state.word_pos_hi as u128) << 64) | state.word_pos_lo as u128;
        rng.inner.set_word_pos(pos);
        rng
    }
}
