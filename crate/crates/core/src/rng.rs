//! Counter-based random streams.
//!
//! A stream is addressed by `(root_seed, stream_index)`: the root seed keys a
//! ChaCha block function and the stream index selects one of its 2^64
//! independent nonce lanes. Child streams are derived by mixing a child id
//! into the index, so the draws of path `k` in an ensemble never depend on
//! how many workers generated the ensemble.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StreamKey {
    pub root_seed: u64,
    pub stream_index: u64,
}

/// A deterministic stream of random numbers.
#[derive(Debug, Clone)]
pub struct RngStream {
    key: StreamKey,
    inner: ChaCha12Rng,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RngStream {
    pub fn new(root_seed: u64, stream_index: u64) -> Self {
        let mut inner = ChaCha12Rng::seed_from_u64(root_seed);
        inner.set_stream(stream_index);
        Self {
            key: StreamKey {
                root_seed,
                stream_index,
            },
            inner,
        }
    }

    pub fn from_seed(root_seed: u64) -> Self {
        Self::new(root_seed, 0)
    }

    pub fn key(&self) -> StreamKey {
        self.key
    }

    pub fn root_seed(&self) -> u64 {
        self.key.root_seed
    }

    pub fn stream_index(&self) -> u64 {
        self.key.stream_index
    }

    /// Number of 32-bit words consumed so far (the draw counter).
    pub fn word_pos(&self) -> u128 {
        self.inner.get_word_pos()
    }

    /// Independent child stream `child` of this stream. Does not advance `self`.
    pub fn fork(&self, child: u64) -> RngStream {
        let idx = splitmix64(self.key.stream_index ^ splitmix64(child.wrapping_add(0xA076_1D64_78BD_642F)));
        RngStream::new(self.key.root_seed, idx)
    }

    /// Uniform on the open interval (0, 1).
    #[inline]
    pub fn uniform_open(&mut self) -> f64 {
        loop {
            let u: f64 = self.inner.random();
            if u > 0.0 {
                return u;
            }
        }
    }

    #[inline]
    pub fn normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    #[inline]
    pub fn exp1(&mut self) -> f64 {
        self.inner.sample(Exp1)
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.inner.fill_bytes(dest)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_key_same_sequence() {
        let mut a = RngStream::new(7, 3);
        let mut b = RngStream::new(7, 3);
        for _ in 0..100 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn distinct_streams_differ() {
        let mut a = RngStream::new(7, 3);
        let mut b = RngStream::new(7, 4);
        let same = (0..64).filter(|_| a.next_u64() == b.next_u64()).count();
        assert_eq!(same, 0);
    }

    #[test]
    fn fork_is_pure() {
        let mut parent = RngStream::new(11, 0);
        let c1 = parent.fork(5);
        parent.next_u64();
        let c2 = parent.fork(5);
        assert_eq!(c1.key(), c2.key());
        assert_ne!(parent.fork(5).key(), parent.fork(6).key());
    }

    #[test]
    fn forked_streams_uncorrelated() {
        let n = 20_000;
        let mut a = RngStream::new(1, 0).fork(0);
        let mut b = RngStream::new(1, 0).fork(1);
        let corr: f64 = (0..n).map(|_| a.normal() * b.normal()).sum::<f64>() / n as f64;
        assert!(corr.abs() < 4.0 / (n as f64).sqrt(), "corr {corr}");
    }
}
