//! Reproducible random streams.
//!
//! Every stochastic routine takes its randomness from a [`StreamId`]: a master
//! seed plus a stream index. Parallel replicas use distinct stream indices, so
//! results do not depend on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub type Rng = ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StreamId {
    pub seed: u64,
    pub stream: u64,
}

impl StreamId {
    pub fn new(seed: u64, stream: u64) -> StreamId {
        StreamId { seed, stream }
    }

    pub fn rng(&self) -> Rng {
        let mut r = ChaCha8Rng::seed_from_u64(self.seed);
        r.set_stream(self.stream);
        r
    }

    /// An independent stream derived from this one and a tag.
    pub fn child(&self, tag: u64) -> StreamId {
        StreamId {
            seed: splitmix64(self.seed ^ splitmix64(self.stream.wrapping_add(0x632b_e59b_d9b4_e019))),
            stream: tag,
        }
    }
}

pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}
