//! Seed derivation. A master seed expands into per-trajectory seeds, and each
//! trajectory seed into independent ChaCha streams for each kind of
//! randomness, so the physical evolution never depends on how many
//! observables were sampled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Gates = 0,
    TGates = 1,
    Measurements = 2,
    Magic = 3,
}

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds a sequence of words into one well-mixed seed.
pub fn mix(seed: u64, words: &[u64]) -> u64 {
    words
        .iter()
        .fold(splitmix64(seed), |h, &w| splitmix64(h ^ splitmix64(w)))
}

pub fn stream(seed: u64, which: Stream) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(which as u64);
    rng
}

/// Fresh stream for the magic estimate taken at time step `t`.
pub fn magic_stream(seed: u64, t: usize) -> StreamRng {
    stream(mix(seed, &[Stream::Magic as u64, t as u64]), Stream::Magic)
}
