//! Exact expectations over all samples of size `N`, grouped by histogram.
//!
//! Every statistic in this crate depends on a sample only through its counts,
//! so summing over count vectors with multinomial weights is equivalent to
//! summing over all `M^N` sequences.

use crate::error::{Error, Result};
use crate::model::Pmf;

/// Default bound on `M^N` for exact enumeration.
pub const DEFAULT_MAX_STATES: u64 = 2_000_000;

/// Fails when `M^N` exceeds `max_states`.
pub fn check_cutoff(m: usize, n: u32, max_states: u64) -> Result<()> {
    let states = (m as f64).powi(n as i32);
    if states > max_states as f64 {
        return Err(Error::EnumerationTooLarge {
            states,
            cutoff: max_states,
        });
    }
    Ok(())
}

/// Calls `f(counts, probability)` once per count vector summing to `n`, in
/// lexicographic order (last symbol varies fastest).
pub fn for_each_histogram<F>(pmf: &Pmf, n: u32, mut f: F)
where
    F: FnMut(&[u32], f64),
{
    let m = pmf.m();
    let theta = pmf.theta();
    let mut counts = vec![0u32; m];
    counts[m - 1] = n;
    loop {
        let mut coef = 1.0f64;
        let mut left = n;
        let mut p = 1.0f64;
        for (i, &c) in counts.iter().enumerate() {
            coef *= binomial(left, c);
            left -= c;
            p *= theta[i].powi(c as i32);
        }
        f(&counts, coef * p);
        if !next_composition(&mut counts) {
            break;
        }
    }
}

/// Number of count vectors of `m` symbols summing to `n`.
pub fn histogram_count(m: usize, n: u32) -> f64 {
    binomial(n + m as u32 - 1, m as u32 - 1)
}

fn binomial(n: u32, k: u32) -> f64 {
    let k = k.min(n - k.min(n));
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64).round()
}

// Advances to the next weak composition in lexicographic order.
fn next_composition(c: &mut [u32]) -> bool {
    let m = c.len();
    let r = match c.iter().rposition(|&v| v > 0) {
        Some(r) if r > 0 => r,
        _ => return false,
    };
    let carry = c[r];
    c[r - 1] += 1;
    c[r] = 0;
    c[m - 1] = carry - 1;
    true
}
