//! Independent seed streams split from one master seed.

/// Named streams; each gets its own sequence of per-index seeds.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Model = 1,
    CollectPolicy = 3,
    EvalTrack = 4,
    EvalPolicy = 5,
    Training = 6,
    Iteration = 7,
    HeldOut = 8,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Seed for item `index` of `stream` under `master`.
pub fn derive_seed(master: u64, stream: Stream, index: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(master) ^ stream as u64) ^ index)
}
