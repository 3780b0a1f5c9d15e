//! Seed handling. Every random stream is derived from a root seed and a path
//! of integer indices, so streams are independent of scheduling and thread
//! count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RunSeed(pub u64);

impl RunSeed {
    /// Independent generator for the stream named by `path`.
    pub fn stream(self, path: &[u64]) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.derive(path))
    }

    /// Child seed for the stream named by `path`.
    pub fn derive(self, path: &[u64]) -> u64 {
        let mut h = splitmix64(self.0 ^ 0x5eed_5eed_5eed_5eed);
        for &p in path {
            h = splitmix64(h ^ splitmix64(p.wrapping_add(0x9e37_79b9_7f4a_7c15)));
        }
        h
    }

    pub fn child(self, path: &[u64]) -> RunSeed {
        RunSeed(self.derive(path))
    }
}

impl From<u64> for RunSeed {
    fn from(v: u64) -> Self {
        RunSeed(v)
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
