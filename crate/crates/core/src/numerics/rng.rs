//! Counter-based random streams.
//!
//! A stream is identified by `(master seed, stream id)` and advances a
//! ChaCha8 block counter. Substreams are derived from the parent id and a
//! key, so parallel work indexed by key draws the same numbers no matter how
//! it is scheduled.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    id: u64,
    rng: ChaCha8Rng,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn expand_seed(seed: u64) -> [u8; 32] {
    let mut out = [0u8; 32];
    let mut s = seed;
    for chunk in out.chunks_exact_mut(8) {
        s = splitmix64(s);
        chunk.copy_from_slice(&s.to_le_bytes());
    }
    out
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self::with_id(seed, 0)
    }

    pub fn with_id(seed: u64, id: u64) -> Self {
        let mut rng = ChaCha8Rng::from_seed(expand_seed(seed));
        rng.set_stream(id);
        RngStream { seed, id, rng }
    }

    /// Independent child stream keyed by `key`, starting at counter zero.
    /// Does not depend on how far this stream has advanced.
    pub fn substream(&self, key: u64) -> RngStream {
        let id = splitmix64(splitmix64(self.id ^ 0x5851_F42D_4C95_7F2D) ^ key);
        Self::with_id(self.seed, id)
    }

    /// Shorthand for nested substreams.
    pub fn substream_path(&self, keys: &[u64]) -> RngStream {
        keys.iter().fold(self.clone(), |s, &k| s.substream(k))
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    /// Number of 32-bit words consumed so far.
    pub fn counter(&self) -> u128 {
        self.rng.get_word_pos()
    }

    pub fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }

    /// Uniform on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    /// Uniform integer in `0..n`.
    pub fn below(&mut self, n: usize) -> usize {
        self.rng.random_range(0..n)
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

/// A point uniformly distributed on the unit sphere in `R^d`.
pub fn sample_unit_sphere(d: usize, stream: &mut RngStream) -> Vec<f64> {
    let mut v = vec![0.0; d];
    fill_unit_sphere(&mut v, stream);
    v
}

pub(crate) fn fill_unit_sphere(v: &mut [f64], stream: &mut RngStream) {
    if v.len() == 1 {
        v[0] = if stream.standard_normal() < 0.0 { -1.0 } else { 1.0 };
        return;
    }
    loop {
        let mut norm2 = 0.0;
        for x in v.iter_mut() {
            *x = stream.standard_normal();
            norm2 += *x * *x;
        }
        if norm2 > 0.0 {
            let inv = 1.0 / norm2.sqrt();
            v.iter_mut().for_each(|x| *x *= inv);
            return;
        }
    }
}
