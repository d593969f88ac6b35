use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Seeded generator on an independent stream.
///
/// Stream 0 of a seed is what [`crate::dist::Distribution::sample`] uses, so
/// callers that need several uncorrelated draws from one user seed take
/// distinct stream numbers.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
