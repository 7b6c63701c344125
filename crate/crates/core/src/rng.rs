//! Reproducible random streams.
//!
//! Every consumer of randomness in a trial owns its own stream, derived from
//! `(base_seed, purpose_tag, trial_index)`. The generator is ChaCha8 keyed by
//! the base seed, with the derived id selecting one of its 2^64 independent
//! streams, so two trials (or two purposes within a trial) never share draws.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    inner: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream_id);
        Self { seed, stream_id, inner }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Uniform draw in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        // 53 random mantissa bits
        (self.inner.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `[0, n)`; `n` must be positive.
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0, "empty range");
        // Lemire's multiply-shift with rejection
        let n = n as u64;
        loop {
            let x = self.inner.next_u64();
            let m = (x as u128) * (n as u128);
            let low = m as u64;
            if low >= n || low >= n.wrapping_neg() % n {
                return (m >> 64) as usize;
            }
        }
    }

    /// Bernoulli draw with success probability `p`.
    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    /// Samples an index from a probability vector by inverse transform.
    pub fn categorical(&mut self, probs: &[f64]) -> usize {
        let u = self.uniform();
        let mut acc = 0.0;
        for (i, &p) in probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return i;
            }
        }
        // rounding left a sliver above the final cumulative sum
        probs.iter().rposition(|&p| p > 0.0).unwrap_or(probs.len() - 1)
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

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// Derives the stream for one purpose within one trial.
///
/// # Panics
/// If `purpose_tag` is empty.
pub fn derive_stream(base_seed: u64, purpose_tag: &str, trial_index: u64) -> RngStream {
    assert!(!purpose_tag.is_empty(), "purpose tag must be non-empty");
    let tag = splitmix64(fnv1a(purpose_tag.as_bytes()));
    let stream_id = splitmix64(tag ^ splitmix64(trial_index.wrapping_add(0x5851_F42D_4C95_7F2D)));
    RngStream::new(base_seed, stream_id)
}
