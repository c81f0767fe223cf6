//! Deterministic random streams.
//!
//! One master seed fans out into independent ChaCha8 streams addressed by a
//! `(domain, index)` pair: the domain picks the key, the index picks the
//! 64-bit stream id. Trial `t` of any Monte Carlo run can therefore be
//! regenerated in isolation, in any order, on any thread.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Stream domains. Distinct domains never share a key.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Domain {
    Scene = 1,
    Trial = 2,
    Phase = 3,
    Delay = 4,
    Misc = 5,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stream `index` within `domain`, derived from `seed`.
pub fn substream(seed: u64, domain: Domain, index: u64) -> SimRng {
    substream_raw(seed, domain as u64, index)
}

/// As [`substream`] with a caller-chosen domain tag (e.g. one per
/// experiment setting).
pub fn substream_raw(seed: u64, domain: u64, index: u64) -> SimRng {
    let mut key = [0u8; 32];
    let a = splitmix64(seed);
    let b = splitmix64(a ^ domain.wrapping_mul(0xD1B5_4A32_D192_ED03));
    let c = splitmix64(b);
    let d = splitmix64(c ^ 0xA5A5_A5A5_A5A5_A5A5);
    for (chunk, w) in key.chunks_exact_mut(8).zip([a, b, c, d]) {
        chunk.copy_from_slice(&w.to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(index);
    rng
}

/// A 64-bit seed for a nested experiment, e.g. the Monte Carlo run of
/// scene `index`.
pub fn derive_seed(seed: u64, domain: Domain, index: u64) -> u64 {
    use rand::RngCore;
    substream(seed, domain, index).next_u64()
}
