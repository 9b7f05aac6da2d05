use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

/// Independent sub-streams of one replication.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Environment = 0,
    Learner = 1,
    /// Second player in self-play.
    Opponent = 2,
}

/// ChaCha20 keyed by `(seed, replication)`; reproducible on every platform.
pub fn rng_stream(seed: u64, replication: u64) -> ChaCha20Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&replication.to_le_bytes());
    ChaCha20Rng::from_seed(key)
}

/// A separate ChaCha stream of the same key, so changing how much one
/// consumer draws never shifts another's numbers.
pub fn substream(seed: u64, replication: u64, stream: Stream) -> ChaCha20Rng {
    let mut rng = rng_stream(seed, replication);
    rng.set_stream(stream as u64 + 1);
    rng
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn same_pair_same_draws() {
        let a: Vec<u64> = rng_stream(42, 3).sample_iter(rand::distributions::Standard).take(1000).collect();
        let b: Vec<u64> = rng_stream(42, 3).sample_iter(rand::distributions::Standard).take(1000).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn different_pairs_differ() {
        let mut a = rng_stream(42, 3);
        let mut b = rng_stream(42, 4);
        let mut c = rng_stream(43, 3);
        let x: u64 = a.gen();
        assert_ne!(x, b.gen::<u64>());
        assert_ne!(x, c.gen::<u64>());
    }

    #[test]
    fn substreams_are_separated() {
        let mut env = substream(1, 0, Stream::Environment);
        let mut learner = substream(1, 0, Stream::Learner);
        let e: Vec<u64> = (0..8).map(|_| env.gen()).collect();
        let l: Vec<u64> = (0..8).map(|_| learner.gen()).collect();
        assert_ne!(e, l);
        // Draining the learner does not move the environment stream.
        let mut env2 = substream(1, 0, Stream::Environment);
        for _ in 0..1000 {
            learner.gen::<u64>();
        }
        let e2: Vec<u64> = (0..8).map(|_| env2.gen()).collect();
        assert_eq!(e, e2);
    }

    #[test]
    fn platform_stable_first_word() {
        // ChaCha20 output for an all-zero key and nonce is a published vector.
        let mut r = ChaCha20Rng::from_seed([0u8; 32]);
        assert_eq!(r.gen::<u32>(), 0xade0b876);
    }
}
