//! Seed handling.
//!
//! Every random draw in the crate comes from a [`Pcg64`] generator whose seed
//! is derived from one 64-bit master seed with [`derive_seed`]. Sub-streams
//! are addressed by small integer paths, e.g. the forest for dimension `d`
//! uses `derive_seed(derive_seed(master, streams::FOREST), d)` and its tree `k`
//! derives once more with `k`.

use rand::SeedableRng;
pub use rand_pcg::Pcg64;

/// Stream identifiers used by the pipeline and the synthetic generator.
pub mod streams {
    pub const FOREST: u64 = 1;
    pub const LSTM: u64 = 2;
    pub const SYNTH_WEIGHTS: u64 = 10;
    pub const SYNTH_NOISE: u64 = 11;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a master seed with a stream index into an independent child seed.
pub fn derive_seed(master: u64, stream: u64) -> u64 {
    splitmix64(splitmix64(master) ^ stream.wrapping_mul(0xD6E8_FEB8_6659_FD93))
}

pub fn generator(seed: u64) -> Pcg64 {
    Pcg64::seed_from_u64(seed)
}
