//! Counter-keyed random substreams.
//!
//! Every stochastic routine derives its generator from `(seed, domain, index)`
//! so results never depend on how work is scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Domain tags keep substreams of different routines disjoint.
pub mod domain {
    pub const LATENT_PATH: u64 = 1;
    pub const OBSERVATION: u64 = 2;
    pub const CRITICAL_VALUES: u64 = 3;
    pub const POWER_ORACLE: u64 = 4;
    pub const SERIES_SIM: u64 = 5;
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Generator for substream `index` of `domain` under the master `seed`.
pub fn substream(seed: u64, domain: u64, index: u64) -> ChaCha8Rng {
    let key = splitmix64(seed ^ splitmix64(domain.wrapping_mul(0xD1B5_4A32_D192_ED03)));
    let mut rng = ChaCha8Rng::seed_from_u64(key);
    rng.set_stream(index);
    rng
}
