//! Seed handling.
//!
//! Every random stream in the crate is a ChaCha8 generator seeded with
//! `ChaCha8Rng::seed_from_u64(seed)` and then moved to a numbered stream
//! with `set_stream`. ChaCha is counter based and its output is fixed by
//! the algorithm, so a given `(seed, stream)` pair yields the same values
//! on every platform.
//!
//! Stream numbers in use. Each consumer owns the block `base << 32`, so
//! indices below 2^32 never collide:
//!
//! | base    | consumer                                  | index       |
//! |---------|-------------------------------------------|-------------|
//! | `0x100` | base branch-length draws of a grid        | regime      |
//! | `0x200` | sampler kernels                           | kernel      |
//! | `0x300` | preliminary topology search bursts        | 0           |
//! | `0x400` | simulated datasets                        | replicate   |
//! | `0x500` | bootstrap replicates                      | replicate   |

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

pub const GRID_STREAM: u64 = 0x100 << 32;
pub const KERNEL_STREAM: u64 = 0x200 << 32;
pub const SEARCH_STREAM: u64 = 0x300 << 32;
pub const SIMULATION_STREAM: u64 = 0x400 << 32;
pub const BOOTSTRAP_STREAM: u64 = 0x500 << 32;

/// Generator for `stream` under `seed`.
pub fn stream(seed: u64, stream: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
