//! Deterministic counter-based random streams.
//!
//! Every random draw in the crate flows through [`RngStream`], a stateless-core
//! generator addressed by `(seed, stream, counter)`. The mixing function is the
//! splitmix64 finalizer, so a draw depends only on those three integers — not
//! on platform, thread schedule, or how many other streams were consumed. This
//! is what makes training runs and Monte-Carlo sweeps bit-reproducible, and it
//! lets independent parallel cells each own a substream without coordination.
//!
//! Gaussians use the Box-Muller transform (cosine branch) over two raw draws;
//! nothing is cached between calls, so the mapping from counter to value stays
//! pure.

use crate::diffcore::tensor::{Real, Tensor};

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// splitmix64 finalizer: well-diffused 64-bit mixing.
fn mix(x: u64) -> u64 {
    let mut z = x.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A named, counter-addressed random stream.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RngStream {
    key: u64,
    counter: u64,
}

impl RngStream {
    /// Open the stream identified by `(seed, stream)` at counter zero.
    pub fn new(seed: u64, stream: u64) -> Self {
        RngStream {
            key: mix(mix(seed) ^ stream),
            counter: 0,
        }
    }

    /// Derive an independent child stream; the parent's counter is untouched,
    /// so derivation order does not depend on how much the parent was used.
    pub fn substream(&self, id: u64) -> RngStream {
        RngStream {
            key: mix(self.key ^ mix(id)),
            counter: 0,
        }
    }

    /// Next raw 64-bit draw.
    pub fn next_u64(&mut self) -> u64 {
        let v = mix(self.key ^ mix(self.counter));
        self.counter += 1;
        v
    }

    /// Uniform draw in `[0, 1)` with 53 random bits.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform draw in `[lo, hi)`.
    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform integer in `[0, n)`, by scaled rejection-free truncation.
    pub fn index(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        // 53-bit uniform scaled to n; bias is ~n/2^53, negligible here.
        ((self.uniform() * n as f64) as usize).min(n - 1)
    }

    /// Standard normal draw via Box-Muller (cosine branch, two raw draws).
    pub fn normal(&mut self) -> f64 {
        // u1 in (0, 1] keeps the logarithm finite.
        let u1 = ((self.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64);
        let u2 = (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }

    /// Tensor of i.i.d. standard normal draws.
    pub fn normal_tensor<T: Real>(&mut self, shape: &[usize]) -> Tensor<T> {
        let mut out = Tensor::zeros(shape);
        for x in out.data_mut() {
            *x = T::from_f64(self.normal());
        }
        out
    }

    /// In-place Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.index(i + 1);
            items.swap(i, j);
        }
    }
}
