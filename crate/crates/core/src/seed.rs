//! Seed derivation so independent random streams of one run never overlap.

/// SplitMix64 finalizer applied to `seed` combined with a stream tag.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed
        .wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub(crate) mod stream {
    pub const ACTOR_INIT: u64 = 1;
    pub const CRITIC_INIT: u64 = 2;
    pub const REPLAY: u64 = 3;
    pub const NOISE: u64 = 4;
    pub const TRAIN_RESET: u64 = 0x7472_6169_6e00_0000;
    pub const EVAL_RESET: u64 = 0x6576_616c_0000_0000;
}
