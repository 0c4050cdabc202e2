//! Named, seed-derived random streams.
//!
//! A master seed is split into independent ChaCha8 streams keyed by a label
//! so that adding draws to one module never shifts another module's draws.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

pub const SCENE_GEN: &str = "scene-gen";
pub const PLANNER: &str = "planner";
pub const SLIP: &str = "slip";
pub const TACTILE_NOISE: &str = "tactile-noise";
pub const FORCE_NOISE: &str = "force-noise";
pub const PERCEPTION: &str = "perception";
pub const GRASP: &str = "grasp";
pub const MESH: &str = "mesh";
pub const OFFSET_TRAIN: &str = "offset-train";
pub const INSERTION_TRAIN: &str = "insertion-train";
pub const OFFSET_HOLDOUT: &str = "offset-holdout";

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes a master seed with an index. Used for per-trial seeds.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut s = master ^ index.wrapping_mul(0xd134_2543_de82_ef95);
    splitmix64(&mut s)
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RngStream {
    pub seed: u64,
    pub stream_id: String,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: impl Into<String>) -> Self {
        RngStream {
            seed,
            stream_id: stream_id.into(),
        }
    }

    /// Child stream `<stream_id>/<index>`.
    pub fn substream(&self, index: u64) -> Self {
        RngStream::new(self.seed, format!("{}/{}", self.stream_id, index))
    }

    pub fn rng(&self) -> StreamRng {
        let mut state = self.seed;
        let mut key = [0u8; 32];
        for chunk in key.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(fnv1a(self.stream_id.as_bytes()));
        rng
    }
}

pub fn stream(seed: u64, stream_id: &str) -> StreamRng {
    RngStream::new(seed, stream_id).rng()
}
