use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Named RNG streams. Every random draw in the crate comes from
/// `ChaCha8Rng::seed_from_u64(seed)` with one of these stream ids, so
/// distinct purposes never share a stream.
pub mod streams {
    pub const BANK: u64 = 1;
    pub const TEACHER: u64 = 2;
    pub const TRAIN_DATA: u64 = 3;
    pub const FINETUNE_DATA: u64 = 4;
    pub const TEST_DATA: u64 = 5;
    pub const INIT: u64 = 6;
    pub const PROBE: u64 = 7;
    pub const PROBE_STATES: u64 = 8;
}

pub fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

pub fn hash_f64s<I: IntoIterator<Item = f64>>(values: I) -> u64 {
    let mut h = Sha256::new();
    for v in values {
        h.update(v.to_bits().to_le_bytes());
    }
    let out = h.finalize();
    let mut b = [0u8; 8];
    b.copy_from_slice(&out[..8]);
    u64::from_le_bytes(b)
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
