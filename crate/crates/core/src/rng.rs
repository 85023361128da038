//! Keyed random streams.
//!
//! Every replica draws from its own ChaCha stream identified by
//! `(master_seed, stream_id)`. ChaCha is counter based, so streams never
//! overlap and can be materialised in any order or on any thread.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// Returns the generator for stream `stream_id` under `master_seed`.
pub fn stream(master_seed: u64, stream_id: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(master_seed);
    rng.set_stream(stream_id);
    rng
}
