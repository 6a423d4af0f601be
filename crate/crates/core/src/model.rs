//! Pmfs on a finite alphabet, i.i.d. sampling, histograms and occupancy sets.
//!
//! Symbols are indexed `0..M` internally; text formats and the CLI use `1..=M`.

use std::collections::BTreeMap;
use std::fmt;

use rand::Rng;
use rand_distr::weighted::WeightedAliasIndex;
use rand_distr::Distribution;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim;

/// Smallest probability accepted in a [`Pmf`].
pub const DEFAULT_POSITIVITY_FLOOR: f64 = 1e-12;
const SUM_TOL: f64 = 1e-12;

/// A strictly positive probability vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Pmf {
    theta: Vec<f64>,
}

/// Families accepted by [`make_pmf`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum PmfKind {
    Uniform,
    Zipf { s: f64 },
    Explicit { values: Vec<f64> },
}

impl Pmf {
    pub fn new(theta: Vec<f64>) -> Result<Self> {
        Self::with_floor(theta, DEFAULT_POSITIVITY_FLOOR)
    }

    pub fn with_floor(theta: Vec<f64>, floor: f64) -> Result<Self> {
        if theta.len() < 2 {
            return Err(Error::InvalidPmf(format!(
                "need at least 2 symbols, got {}",
                theta.len()
            )));
        }
        let bad: Vec<String> = theta
            .iter()
            .enumerate()
            .filter(|(_, t)| !(t.is_finite() && **t >= floor))
            .map(|(i, t)| format!("#{} = {t}", i + 1))
            .collect();
        let sum: f64 = theta.iter().sum();
        let mut problems = Vec::new();
        if !bad.is_empty() {
            problems.push(format!("entries below floor {floor:e}: {}", bad.join(", ")));
        }
        if !((sum - 1.0).abs() <= SUM_TOL) {
            problems.push(format!("entries sum to {sum}, expected 1"));
        }
        if problems.is_empty() {
            Ok(Self { theta })
        } else {
            Err(Error::InvalidPmf(problems.join("; ")))
        }
    }

    pub fn uniform(m: usize) -> Result<Self> {
        if m < 2 {
            return Err(Error::InvalidPmf(format!("need at least 2 symbols, got {m}")));
        }
        Ok(Self {
            theta: vec![1.0 / m as f64; m],
        })
    }

    /// `θ_m ∝ m^(-s)`, `m = 1..=M`.
    pub fn zipf(m: usize, s: f64) -> Result<Self> {
        if !(s >= 0.0) || !s.is_finite() {
            return Err(Error::InvalidPmf(format!("zipf exponent must be >= 0, got {s}")));
        }
        if m < 2 {
            return Err(Error::InvalidPmf(format!("need at least 2 symbols, got {m}")));
        }
        let w: Vec<f64> = (1..=m).map(|k| (k as f64).powf(-s)).collect();
        let z: f64 = w.iter().sum();
        Self::new(w.into_iter().map(|x| x / z).collect())
    }

    pub fn m(&self) -> usize {
        self.theta.len()
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn is_uniform(&self) -> bool {
        self.theta.iter().all(|t| *t == self.theta[0])
    }

    /// One probability per line; blank lines and `#` comments are ignored.
    pub fn parse_text(text: &str) -> Result<Self> {
        let mut theta = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let v: f64 = line.parse().map_err(|_| {
                Error::InvalidPmf(format!("line {}: cannot parse `{line}` as a number", lineno + 1))
            })?;
            theta.push(v);
        }
        Self::new(theta)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for t in &self.theta {
            s.push_str(&format!("{t:?}\n"));
        }
        s
    }
}

impl fmt::Display for PmfKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PmfKind::Uniform => write!(f, "uniform"),
            PmfKind::Zipf { s } => write!(f, "zipf:s={s}"),
            PmfKind::Explicit { values } => write!(f, "explicit[{}]", values.len()),
        }
    }
}

/// Builds a pmf on `m` symbols. For `Explicit`, `m` must match the vector length.
pub fn make_pmf(kind: &PmfKind, m: usize) -> Result<Pmf> {
    match kind {
        PmfKind::Uniform => Pmf::uniform(m),
        PmfKind::Zipf { s } => Pmf::zipf(m, *s),
        PmfKind::Explicit { values } => {
            if values.len() != m {
                return Err(Error::Dimension(format!(
                    "explicit pmf has {} entries but M = {m}",
                    values.len()
                )));
            }
            Pmf::new(values.clone())
        }
    }
}

/// Counts `C_{N,m}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Histogram {
    counts: Vec<u32>,
    n: u32,
}

impl Histogram {
    pub fn from_counts(counts: Vec<u32>) -> Result<Self> {
        if counts.len() < 2 {
            return Err(Error::Dimension("histogram needs at least 2 symbols".into()));
        }
        let n: u32 = counts.iter().sum();
        if n == 0 {
            return Err(Error::InvalidArgument("histogram is empty (N = 0)".into()));
        }
        Ok(Self { counts, n })
    }

    pub fn from_symbols(m: usize, x: &[usize]) -> Result<Self> {
        let mut counts = vec![0u32; m];
        for &s in x {
            if s >= m {
                return Err(Error::Dimension(format!("symbol index {} outside 1..={m}", s + 1)));
            }
            counts[s] += 1;
        }
        Self::from_counts(counts)
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn m(&self) -> usize {
        self.counts.len()
    }

    /// Number of symbols seen exactly `r` times, `|G_{N,r}|`.
    pub fn count_with(&self, r: u32) -> usize {
        self.counts.iter().filter(|&&c| c == r).count()
    }

    /// Indices of unseen symbols, `G_{N,0}`.
    pub fn unseen(&self) -> impl Iterator<Item = usize> + '_ {
        self.counts
            .iter()
            .enumerate()
            .filter(|(_, &c)| c == 0)
            .map(|(i, _)| i)
    }

    pub fn is_unseen(&self, m: usize) -> bool {
        self.counts[m] == 0
    }

    /// Occupancy sets `r -> G_{N,r}` for the `r` values that occur.
    pub fn occupancy(&self) -> BTreeMap<u32, Vec<usize>> {
        let mut occ: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
        for (i, &c) in self.counts.iter().enumerate() {
            occ.entry(c).or_default().push(i);
        }
        occ
    }
}

/// An observed sequence with its histogram and occupancy sets.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    x: Vec<usize>,
    hist: Histogram,
    occupancy: BTreeMap<u32, Vec<usize>>,
}

impl SampleSet {
    pub fn new(m: usize, x: Vec<usize>) -> Result<Self> {
        let hist = Histogram::from_symbols(m, &x)?;
        let occupancy = hist.occupancy();
        Ok(Self { x, hist, occupancy })
    }

    pub fn x(&self) -> &[usize] {
        &self.x
    }

    pub fn histogram(&self) -> &Histogram {
        &self.hist
    }

    pub fn counts(&self) -> &[u32] {
        self.hist.counts()
    }

    pub fn n(&self) -> u32 {
        self.hist.n()
    }

    pub fn occupancy(&self) -> &BTreeMap<u32, Vec<usize>> {
        &self.occupancy
    }

    /// `G_{N,r}`; empty when no symbol occurs exactly `r` times.
    pub fn occupancy_set(&self, r: u32) -> &[usize] {
        self.occupancy.get(&r).map(Vec::as_slice).unwrap_or(&[])
    }
}

/// Alias-table sampler for repeated draws from one pmf.
#[derive(Debug, Clone)]
pub struct Sampler {
    alias: WeightedAliasIndex<f64>,
    m: usize,
}

impl Sampler {
    pub fn new(pmf: &Pmf) -> Self {
        let alias = WeightedAliasIndex::new(pmf.theta().to_vec())
            .expect("a valid pmf always has positive finite weights");
        Self { alias, m: pmf.m() }
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.alias.sample(rng)
    }

    /// Overwrites `counts` with the histogram of `n` fresh draws.
    pub fn draw_counts<R: Rng + ?Sized>(&self, rng: &mut R, n: u32, counts: &mut Vec<u32>) {
        counts.clear();
        counts.resize(self.m, 0);
        for _ in 0..n {
            counts[self.alias.sample(rng)] += 1;
        }
    }
}

/// Draws `n` i.i.d. symbols. Deterministic for a fixed seed.
pub fn draw_samples(pmf: &Pmf, n: u32, seed: u64) -> Result<SampleSet> {
    if n == 0 {
        return Err(Error::InvalidArgument("N must be at least 1".into()));
    }
    let sampler = Sampler::new(pmf);
    let mut rng = sim::stream(seed, &[]);
    let x = (0..n).map(|_| sampler.draw(&mut rng)).collect();
    SampleSet::new(pmf.m(), x)
}

/// `Pr(x ∈ A_m) = (1 - θ_m)^N`.
pub fn pr_unobserved(pmf: &Pmf, n: u32, m: usize) -> f64 {
    (1.0 - pmf.theta()[m]).powi(n as i32)
}

/// All `M` unseen probabilities.
pub fn pr_unobserved_all(pmf: &Pmf, n: u32) -> Vec<f64> {
    (0..pmf.m()).map(|m| pr_unobserved(pmf, n, m)).collect()
}

/// Total probability of the unseen symbols.
pub fn missing_mass(pmf: &Pmf, hist: &Histogram) -> f64 {
    hist.unseen().map(|m| pmf.theta()[m]).sum()
}

/// `Σ_{m ∈ G_{N,0}} (θ̂_m - θ_m)²`.
pub fn mm_cost(estimate: &[f64], pmf: &Pmf, hist: &Histogram) -> f64 {
    hist.unseen()
        .map(|m| {
            let e = estimate[m] - pmf.theta()[m];
            e * e
        })
        .sum()
}

/// `p(x | x ∈ A_m; θ)`; zero when symbol `m` occurs in `x`.
pub fn conditional_pmf_value(pmf: &Pmf, x: &[usize], m: usize) -> f64 {
    if x.contains(&m) {
        return 0.0;
    }
    let p: f64 = x.iter().map(|&s| pmf.theta()[s]).product();
    p / (1.0 - pmf.theta()[m]).powi(x.len() as i32)
}

#[cfg(test)]
mod tests {
    use super::*;

    // a a c c c e e f h h over {a..h}
    fn fixture() -> SampleSet {
        SampleSet::new(8, vec![0, 0, 2, 2, 2, 4, 4, 5, 7, 7]).unwrap()
    }

    #[test]
    fn fixture_histogram_and_occupancy() {
        let s = fixture();
        assert_eq!(s.counts(), &[2, 0, 3, 0, 2, 1, 0, 2]);
        assert_eq!(s.occupancy_set(0), &[1, 3, 6]);
        assert_eq!(s.occupancy_set(1), &[5]);
        assert_eq!(s.occupancy_set(2), &[0, 4, 7]);
        assert_eq!(s.occupancy_set(3), &[2]);
        assert!(s.occupancy_set(4).is_empty());
    }

    #[test]
    fn pmf_constructors() {
        assert_eq!(Pmf::uniform(4).unwrap().theta(), &[0.25; 4]);
        let z0 = Pmf::zipf(3, 0.0).unwrap();
        for t in z0.theta() {
            assert!((t - 1.0 / 3.0).abs() < 1e-15);
        }
        let z1 = Pmf::zipf(3, 1.0).unwrap();
        for (a, b) in z1.theta().iter().zip([6.0 / 11.0, 3.0 / 11.0, 2.0 / 11.0]) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn explicit_validation_lists_offenders() {
        let err = Pmf::new(vec![0.5, 0.0, 0.7, -0.1]).unwrap_err().to_string();
        assert!(err.contains("#2") && err.contains("#4"), "{err}");
        assert!(err.contains("sum"), "{err}");
        assert!(Pmf::new(vec![0.5, 0.5]).is_ok());
        assert!(make_pmf(&PmfKind::Explicit { values: vec![0.5, 0.5] }, 3).is_err());
    }

    #[test]
    fn text_round_trip() {
        let p = Pmf::zipf(6, 1.3).unwrap();
        let q = Pmf::parse_text(&format!("# zipf\n\n{}", p.to_text())).unwrap();
        assert_eq!(p, q);
        assert!(Pmf::parse_text("0.5\nfoo\n").is_err());
    }

    #[test]
    fn unseen_probabilities() {
        assert_eq!(pr_unobserved(&Pmf::new(vec![0.5, 0.5]).unwrap(), 2, 0), 0.25);
        assert_eq!(pr_unobserved(&Pmf::uniform(4).unwrap(), 3, 2), 27.0 / 64.0);
        let z = Pmf::zipf(3, 1.0).unwrap();
        assert!((pr_unobserved(&z, 5, 0) - (5.0f64 / 11.0).powi(5)).abs() < 1e-15);
    }

    #[test]
    fn missing_mass_and_cost() {
        let theta = Pmf::new(vec![0.1, 0.1, 0.2, 0.1, 0.2, 0.1, 0.1, 0.1]).unwrap();
        let s = fixture();
        assert!((missing_mass(&theta, s.histogram()) - 0.3).abs() < 1e-15);
        let full = SampleSet::new(3, vec![0, 1, 2]).unwrap();
        assert_eq!(missing_mass(&Pmf::uniform(3).unwrap(), full.histogram()), 0.0);

        let u = Pmf::uniform(3).unwrap();
        let s2 = SampleSet::new(3, vec![0, 2, 2]).unwrap();
        assert!((missing_mass(&u, s2.histogram()) - 1.0 / 3.0).abs() < 1e-15);
        let cml = [1.0 / 3.0, 0.0, 2.0 / 3.0];
        assert!((mm_cost(&cml, &u, s2.histogram()) - 1.0 / 9.0).abs() < 1e-15);
        assert_eq!(mm_cost(u.theta(), &u, s2.histogram()), 0.0);
    }

    #[test]
    fn conditional_pmf() {
        let p = Pmf::new(vec![0.3, 0.7]).unwrap();
        assert_eq!(conditional_pmf_value(&p, &[0], 0), 0.0);
        assert!((conditional_pmf_value(&p, &[0], 1) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn draws_are_seed_deterministic() {
        let p = Pmf::zipf(7, 1.0).unwrap();
        let a = draw_samples(&p, 50, 9).unwrap();
        let b = draw_samples(&p, 50, 9).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.n(), 50);
        assert_ne!(a, draw_samples(&p, 50, 10).unwrap());
    }
}
