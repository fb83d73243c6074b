//! Deterministic random streams.
//!
//! Every random draw in the crate comes from a generator built out of an
//! explicit [`RngStream`]. Child streams are derived by hashing a tag into the
//! stream id, so trial `k` of a run always sees the same draws regardless of
//! how trials are scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Generator type handed out by [`RngStream::rng`].
pub type SimRng = ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStream {
    pub seed: u64,
    pub stream: u64,
}

impl RngStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        Self { seed, stream }
    }

    /// Fresh generator positioned at the start of this stream.
    pub fn rng(&self) -> SimRng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }

    /// Child stream identified by `tag`. Distinct tags give distinct streams.
    pub fn derive(&self, tag: u64) -> Self {
        Self {
            seed: self.seed,
            stream: splitmix64(self.stream ^ splitmix64(tag.wrapping_add(0x5851_f42d_4c95_7f2d))),
        }
    }

    /// Child stream keyed by a string label.
    pub fn derive_named(&self, label: &str) -> Self {
        // FNV-1a
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in label.bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        self.derive(h)
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn same_stream_same_draws() {
        let s = RngStream::new(7, 3);
        let a: Vec<u64> = (0..16).map({
            let mut r = s.rng();
            move |_| r.random()
        }).collect();
        let b: Vec<u64> = (0..16).map({
            let mut r = s.rng();
            move |_| r.random()
        }).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn derived_streams_differ() {
        let s = RngStream::new(7, 0);
        let x: u64 = s.derive(1).rng().random();
        let y: u64 = s.derive(2).rng().random();
        let z: u64 = s.derive_named("partition").rng().random();
        assert_ne!(x, y);
        assert_ne!(x, z);
        assert_eq!(s.derive(1), s.derive(1));
    }
}
