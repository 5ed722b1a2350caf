//! Seed derivation.
//!
//! Every random stream in the crate is a [`ChaCha8Rng`] seeded from a `u64` that is
//! derived from a master seed, a stream label and an index. Derivation is a fixed
//! hash, so the same master seed reproduces the same streams on every platform and
//! for any worker count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed for the stream `label` / `index` of `master`.
pub fn derive(master: u64, label: &str, index: u64) -> u64 {
    // FNV-1a over the label keeps derivation independent of std's hasher.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    splitmix64(splitmix64(master ^ h).wrapping_add(splitmix64(index)))
}

pub fn rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Samples per independently seeded chunk in [`sample_moments`].
pub const CHUNK: u64 = 4096;

/// Running mean and sum of squared deviations (Welford), mergeable across chunks.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Moments {
    pub count: u64,
    pub mean: f64,
    m2: f64,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn merge(&mut self, other: &Moments) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = *other;
            return;
        }
        let total = self.count + other.count;
        let delta = other.mean - self.mean;
        self.mean += delta * other.count as f64 / total as f64;
        self.m2 += other.m2 + delta * delta * (self.count as f64 * other.count as f64) / total as f64;
        self.count = total;
    }

    /// Unbiased sample variance; 0 for fewer than two samples.
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            (self.m2 / (self.count - 1) as f64).max(0.0)
        }
    }

    /// Standard error of the mean.
    pub fn stderr(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            (self.variance() / self.count as f64).sqrt()
        }
    }
}

/// Draws `total` samples of `draw`, split into chunks of [`CHUNK`] samples whose RNGs
/// are derived from `(seed, label, chunk index)`. Chunks may run on any number of
/// workers; they are merged in index order, so the result does not depend on the
/// worker count.
pub fn sample_moments<F>(seed: u64, label: &str, total: u64, draw: F) -> Moments
where
    F: Fn(&mut Rng) -> f64 + Sync,
{
    use rayon::prelude::*;
    let chunks = total.div_ceil(CHUNK);
    let parts: Vec<Moments> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = rng(derive(seed, label, c));
            let len = CHUNK.min(total - c * CHUNK);
            let mut m = Moments::default();
            for _ in 0..len {
                m.push(draw(&mut rng));
            }
            m
        })
        .collect();
    parts.iter().fold(Moments::default(), |mut acc, m| {
        acc.merge(m);
        acc
    })
}

/// Like [`sample_moments`] for a vector of `dim` statistics drawn jointly per sample.
/// Each chunk gets a fresh `S::default()` as scratch space for `draw`.
pub fn sample_moments_vec<S, F>(seed: u64, label: &str, total: u64, dim: usize, draw: F) -> Vec<Moments>
where
    S: Default,
    F: Fn(&mut Rng, &mut S, &mut [f64]) + Sync,
{
    use rayon::prelude::*;
    let chunks = total.div_ceil(CHUNK);
    let parts: Vec<Vec<Moments>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = rng(derive(seed, label, c));
            let len = CHUNK.min(total - c * CHUNK);
            let mut m = vec![Moments::default(); dim];
            let mut buf = vec![0.0; dim];
            let mut scratch = S::default();
            for _ in 0..len {
                draw(&mut rng, &mut scratch, &mut buf);
                for (acc, &x) in m.iter_mut().zip(&buf) {
                    acc.push(x);
                }
            }
            m
        })
        .collect();
    parts.iter().fold(vec![Moments::default(); dim], |mut acc, part| {
        for (a, p) in acc.iter_mut().zip(part) {
            a.merge(p);
        }
        acc
    })
}
