//! Random stream derivation.
//!
//! Every replicate draws from its own ChaCha8 stream: the key is derived from
//! the master seed with `seed_from_u64`, and the 64-bit stream id is the
//! replicate index. Streams with distinct ids never overlap, so replicate
//! outputs do not depend on execution order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type ChainRng = ChaCha8Rng;

pub fn replicate_rng(master_seed: u64, replicate: u64) -> ChainRng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(replicate);
    rng
}
