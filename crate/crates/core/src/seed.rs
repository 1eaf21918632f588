//! Deterministic derivation of independent RNG streams from a base seed.
//!
//! Every consumer of randomness (environment episodes, action sampling,
//! parameter initialisation, evaluation) gets its own stream so that changing
//! how one of them draws never perturbs the others.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Named stream tags.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    TrainEnv = 1,
    Policy = 2,
    Init = 3,
    EvalEnv = 4,
    EvalPolicy = 5,
    Mobility = 6,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a base seed, a stream tag and a list of indices into one 64-bit seed.
pub fn derive(base: u64, stream: Stream, indices: &[u64]) -> u64 {
    let mut h = splitmix64(base ^ splitmix64(stream as u64));
    for &i in indices {
        h = splitmix64(h ^ splitmix64(i.wrapping_add(0xA5A5_A5A5)));
    }
    h
}

pub fn rng(base: u64, stream: Stream, indices: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(base, stream, indices))
}
