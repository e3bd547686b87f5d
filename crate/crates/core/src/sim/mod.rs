//! Deterministic statevector simulator.

mod density;
mod op;
mod oracle;
mod state;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use density::DensityOp;
pub use op::{exp_hermitian, Op};
pub use oracle::{oracle_from_function, phase_oracle, FixedPoint};
pub use state::{
    overlap, sample_counts, sample_index, Ctrl, Layout, Register, SimState, NORM_SLACK,
};

pub type SimRng = ChaCha8Rng;

/// Independent random stream `stream` derived from a master seed.
pub fn rng_for(seed: u64, stream: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Stream id for branch `index` of pipeline stage `stage`.
pub fn stream_id(stage: u32, index: u64) -> u64 {
    ((stage as u64) << 40) | (index & ((1 << 40) - 1))
}
