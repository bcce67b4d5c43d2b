//! Named, reproducible random substreams.
//!
//! Every stochastic component derives its generator from the run seed plus a
//! label (and optional integer coordinates), so results do not depend on the
//! order in which work is scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a 64-bit seed from a base seed, a label and coordinates.
pub fn derive_seed(seed: u64, label: &str, coords: &[u64]) -> u64 {
    // FNV-1a over the label, then mixed with the seed and coordinates.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    let mut s = splitmix(seed ^ h);
    for &c in coords {
        s = splitmix(s ^ c.wrapping_mul(0xA24B_AED4_963E_E407));
    }
    s
}

pub fn substream(seed: u64, label: &str, coords: &[u64]) -> Rng {
    Rng::seed_from_u64(derive_seed(seed, label, coords))
}
