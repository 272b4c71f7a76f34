//! Every random draw in a run comes from one seed, split into named
//! independent ChaCha streams.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const INIT: &str = "init";
pub const EXPLORE: &str = "explore";
pub const REPLAY: &str = "replay";
pub const TRAIN_SCENARIOS: &str = "train-scenarios";
pub const EVAL_SCENARIOS: &str = "eval-scenarios";
pub const GRADCHECK: &str = "gradcheck";

fn fnv1a(name: &str) -> u64 {
    name.bytes()
        .fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

pub fn substream(seed: u64, name: &str) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(fnv1a(name));
    rng
}

/// The first `n` world seeds of a named scenario stream.
pub fn scenario_seeds(seed: u64, name: &str, n: usize) -> Vec<u64> {
    let mut rng = substream(seed, name);
    (0..n).map(|_| rng.random()).collect()
}
