//! Discrete-time simulation of a jammed low-power link whose transmitter can
//! harvest RF energy, backscatter ambient (or jamming) signals, and adapt its
//! rate, plus the learning agents that find a defence policy for it.
//!
//! Module map:
//!
//! - [`phy`]: SINR and the backscatter modulate / average / threshold chain.
//! - [`jammer`]: the power-budgeted mixed jamming strategy and its sampler.
//! - [`env`]: the slotted MDP environment and its metrics accumulator.
//! - [`agents`]: tabular Q-learning, deep Q-learning and deep dueling.
//! - [`oracle`]: exact reference solvers used to validate the above.
//! - [`harness`]: experiment configs, baselines, sweeps, CSV output.
//!
//! Independent runs are dispatched through [`exec`], which uses rayon when
//! the `parallel` feature is enabled and a plain loop otherwise.

pub mod agents;
pub mod env;
pub mod error;
pub mod exec;
pub mod harness;
pub mod jammer;
pub mod oracle;
pub mod phy;

pub use error::{Error, Result};

/// Deterministic random source used everywhere in the crate.
pub type SimRng = rand_chacha::ChaCha8Rng;

/// Builds the crate's random source from a 64-bit seed.
pub fn rng_from_seed(seed: u64) -> SimRng {
    use rand::SeedableRng;
    SimRng::seed_from_u64(seed)
}

/// Derives an independent sub-seed (splitmix64 finaliser over `seed ^ stream`).
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
