//! Reproducible random substreams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Random source every simulation draw goes through.
pub type SimRng = ChaCha8Rng;

/// Independent, reproducible substream `stream_id` of `seed`.
///
/// Streams share the ChaCha key derived from `seed` and differ in the stream
/// word, so identical `(seed, stream_id)` pairs replay identical sequences.
pub fn rng_stream(seed: u64, stream_id: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_id);
    rng
}
