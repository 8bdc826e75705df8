//! Seed derivation for independent, reproducible random streams.

/// SplitMix64 finalizer.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of Monte Carlo run `run` under master seed `seed`.
pub fn run_seed(seed: u64, run: usize) -> u64 {
    splitmix64(seed ^ run as u64)
}

/// Seed of a named sub-stream (split, hidden layer, ...) of a run.
pub fn stream_seed(seed: u64, stream: u64) -> u64 {
    splitmix64(seed.wrapping_add(splitmix64(stream)))
}
