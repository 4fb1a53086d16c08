//! Counter-based random substreams.
//!
//! Every stream is a ChaCha12 keystream keyed by `(master_seed, domain)` and
//! positioned by a 64-bit stream id, so the draws for pair `i` depend only on
//! the master seed and `i`, never on scheduling or on how many other pairs
//! were drawn before.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

pub type StreamRng = ChaCha12Rng;

/// Stream family used for initial-condition sampling.
pub const DOMAIN_SAMPLING: u64 = 0x5341_4d50;
/// Stream family used for random toy mode systems.
pub const DOMAIN_MODES: u64 = 0x4d4f_4445;

/// Independent substream `index` of family `domain` under `master_seed`.
pub fn substream(master_seed: u64, domain: u64, index: u64) -> StreamRng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&master_seed.to_le_bytes());
    key[8..16].copy_from_slice(&domain.to_le_bytes());
    let mut rng = ChaCha12Rng::from_seed(key);
    rng.set_stream(index);
    rng
}

/// Substream for sampling the initial positions of pair `pair_index`.
pub fn pair_stream(master_seed: u64, pair_index: u64) -> StreamRng {
    substream(master_seed, DOMAIN_SAMPLING, pair_index)
}
