//! Seeded random streams and the trial loop shared by every Monte Carlo routine.
//!
//! Each trial draws from its own stream derived from `(seed, tag, index)`, and
//! trials are reduced in fixed-size chunks in index order, so results depend
//! on neither the number of worker threads nor the execution mode.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Trials per reduction chunk. Part of the numerical contract: changing it
/// changes the floating-point summation order.
pub const CHUNK: usize = 256;

/// Stream tags, so different consumers of one master seed never collide.
pub mod tag {
    pub const TRIAL: u64 = 1;
    pub const PROFILE: u64 = 2;
    pub const FISHER: u64 = 3;
    pub const BOUND_SE: u64 = 4;
    pub const SWEEP: u64 = 5;
    pub const SCORE: u64 = 6;
}

fn splitmix(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a 64-bit seed from a master seed and a path of indices.
pub fn derive(seed: u64, path: &[u64]) -> u64 {
    let mut state = seed;
    let mut out = splitmix(&mut state);
    for &p in path {
        state ^= p.wrapping_mul(0xD6E8_FEB8_6659_FD93);
        out = splitmix(&mut state) ^ out.rotate_left(17);
    }
    out
}

/// A ChaCha8 generator keyed by `(seed, path)`.
pub fn stream(seed: u64, path: &[u64]) -> ChaCha8Rng {
    let mut state = derive(seed, path);
    let mut key = [0u8; 32];
    for chunk in key.chunks_mut(8) {
        chunk.copy_from_slice(&splitmix(&mut state).to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

/// How trial loops are executed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Exec {
    Sequential,
    /// Uses the rayon pool when the `parallel` feature is on, otherwise sequential.
    #[default]
    Parallel,
}

impl Exec {
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Exec::Parallel
    }
}

/// Maps `f` over `0..n` and returns results in index order.
pub fn map_indexed<T, F>(exec: Exec, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        return (0..n).into_par_iter().map(f).collect();
    }
    let _ = exec;
    (0..n).map(f).collect()
}

/// Folds trials `0..n` into accumulators chunk by chunk, then merges the chunk
/// accumulators left to right.
pub fn fold_trials<A, I, F, G>(exec: Exec, n: usize, init: I, fold: F, merge: G) -> A
where
    A: Send,
    I: Fn() -> A + Sync + Send,
    F: Fn(&mut A, usize) + Sync + Send,
    G: Fn(&mut A, A),
{
    let chunks = n.div_ceil(CHUNK);
    let partial = map_indexed(exec, chunks, |c| {
        let mut acc = init();
        for t in c * CHUNK..((c + 1) * CHUNK).min(n) {
            fold(&mut acc, t);
        }
        acc
    });
    let mut total = init();
    for p in partial {
        merge(&mut total, p);
    }
    total
}

/// Running sums of a scalar for mean and standard error.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Moments {
    pub n: u64,
    pub sum: f64,
    pub sum_sq: f64,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        self.sum += x;
        self.sum_sq += x * x;
    }

    pub fn merge(&mut self, other: &Moments) {
        self.n += other.n;
        self.sum += other.sum;
        self.sum_sq += other.sum_sq;
    }

    pub fn mean(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            self.sum / self.n as f64
        }
    }

    /// Standard error of the mean (unbiased sample variance).
    pub fn std_error(&self) -> f64 {
        if self.n < 2 {
            return f64::NAN;
        }
        let n = self.n as f64;
        let var = ((self.sum_sq - self.sum * self.sum / n) / (n - 1.0)).max(0.0);
        (var / n).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::RngCore;

    #[test]
    fn streams_differ_by_path_and_repeat_by_key() {
        let a = stream(1, &[tag::TRIAL, 0]).next_u64();
        let b = stream(1, &[tag::TRIAL, 1]).next_u64();
        let c = stream(1, &[tag::PROFILE, 0]).next_u64();
        assert_ne!(a, b);
        assert_ne!(a, c);
        assert_eq!(a, stream(1, &[tag::TRIAL, 0]).next_u64());
        assert_ne!(derive(1, &[2, 3]), derive(1, &[3, 2]));
    }

    #[test]
    fn fold_is_mode_independent() {
        let run = |exec| {
            fold_trials(
                exec,
                3000,
                Moments::default,
                |acc, t| acc.push((stream(5, &[t as u64]).next_u32() as f64).sqrt()),
                |a, b| a.merge(&b),
            )
        };
        assert_eq!(run(Exec::Sequential), run(Exec::Parallel));
    }

    #[test]
    fn moments() {
        let mut m = Moments::default();
        for x in [1.0, 2.0, 3.0, 4.0] {
            m.push(x);
        }
        assert_eq!(m.mean(), 2.5);
        assert!((m.std_error() - (5.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-15);
    }
}
