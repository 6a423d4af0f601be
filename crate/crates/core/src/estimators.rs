//! CML, Good-Turing and add-constant estimators, and the textual estimator specs.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::fisher::{FisherSpec, FisherTrace};
use crate::model::Histogram;

/// Normalizer `N′` of the Good-Turing unseen mass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Normalizer {
    SampleSize,
    Fixed(f64),
}

impl Normalizer {
    pub fn value(self, n: u32) -> f64 {
        match self {
            Normalizer::SampleSize => n as f64,
            Normalizer::Fixed(v) => v,
        }
    }
}

/// Which occupancy count feeds the Good-Turing numerator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GtNumerator {
    /// Symbols seen exactly once (classical Good-Turing).
    #[default]
    Singletons,
    /// Symbols never seen; kept for comparison only.
    Unseen,
}

#[derive(Debug, Clone, PartialEq)]
pub enum EstimatorSpec {
    Cml,
    GoodTuring {
        normalizer: Normalizer,
        numerator: GtNumerator,
    },
    AddConstant {
        c: f64,
    },
    Fisher(FisherSpec),
}

impl EstimatorSpec {
    pub fn good_turing() -> Self {
        EstimatorSpec::GoodTuring {
            normalizer: Normalizer::SampleSize,
            numerator: GtNumerator::Singletons,
        }
    }

    pub fn laplace() -> Self {
        EstimatorSpec::AddConstant { c: 1.0 }
    }

    /// True when the estimate is a closed-form function of the histogram that
    /// assigns one common value to every unseen symbol.
    pub fn is_natural(&self) -> bool {
        !matches!(self, EstimatorSpec::Fisher(_))
    }

    /// Total unseen mass and the value given to each unseen symbol (`None`
    /// when every symbol was observed). Not defined for Fisher scoring.
    pub fn unseen_assignment(&self, hist: &Histogram) -> (f64, Option<f64>) {
        let g0 = hist.count_with(0);
        let total = match self {
            EstimatorSpec::Cml => 0.0,
            EstimatorSpec::GoodTuring {
                normalizer,
                numerator,
            } => {
                if g0 == 0 {
                    return (0.0, None);
                }
                let t = match numerator {
                    GtNumerator::Singletons => hist.count_with(1),
                    GtNumerator::Unseen => g0,
                };
                (t.max(1) as f64) / normalizer.value(hist.n())
            }
            EstimatorSpec::AddConstant { c } => {
                let m = hist.m() as f64;
                c / (hist.n() as f64 + c * (m - g0 as f64 + 1.0))
            }
            EstimatorSpec::Fisher(_) => {
                panic!("unseen_assignment is only defined for closed-form estimators")
            }
        };
        if g0 == 0 {
            (total, None)
        } else {
            (total, Some(total / g0 as f64))
        }
    }

    /// Estimates from a histogram. Fisher scoring needs a seed for its inner
    /// Monte Carlo; natural estimators ignore it.
    pub fn estimate(&self, hist: &Histogram, seed: u64) -> Result<EstimateResult> {
        match self {
            EstimatorSpec::Fisher(spec) => crate::fisher::estimate_fisher_scoring(
                hist,
                spec,
                seed,
                crate::sim::Exec::Sequential,
            ),
            _ => Ok(self.estimate_natural(hist)),
        }
    }

    fn estimate_natural(&self, hist: &Histogram) -> EstimateResult {
        let counts = hist.counts();
        let n = hist.n() as f64;
        let (unseen_total, per) = self.unseen_assignment(hist);
        let unseen: Vec<usize> = hist.unseen().collect();
        let theta_hat = match self {
            EstimatorSpec::Cml => counts.iter().map(|&c| c as f64 / n).collect(),
            EstimatorSpec::GoodTuring { .. } => {
                let seen_scale = 1.0 - if per.is_some() { unseen_total } else { 0.0 };
                counts
                    .iter()
                    .map(|&c| match (c, per) {
                        (0, Some(v)) => v,
                        _ => c as f64 / n * seen_scale,
                    })
                    .collect()
            }
            EstimatorSpec::AddConstant { c } => {
                let seen_weight: f64 = counts.iter().filter(|&&k| k > 0).map(|&k| k as f64 + c).sum();
                let seen_mass = 1.0 - if per.is_some() { unseen_total } else { 0.0 };
                counts
                    .iter()
                    .map(|&k| match (k, per) {
                        (0, Some(v)) => v,
                        _ => (k as f64 + c) / seen_weight * seen_mass,
                    })
                    .collect()
            }
            EstimatorSpec::Fisher(_) => unreachable!(),
        };
        EstimateResult {
            per_element_unseen: per.map(|v| unseen.iter().map(|&m| (m, v)).collect()).unwrap_or_default(),
            unseen_total,
            theta_hat,
            trace: None,
        }
    }
}

/// Output of an estimator on one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateResult {
    pub theta_hat: Vec<f64>,
    /// `(symbol, value)` for every unseen symbol.
    pub per_element_unseen: Vec<(usize, f64)>,
    /// Total mass given to unseen symbols.
    pub unseen_total: f64,
    pub trace: Option<FisherTrace>,
}

impl fmt::Display for Normalizer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Normalizer::SampleSize => write!(f, "N"),
            Normalizer::Fixed(v) => write!(f, "{v}"),
        }
    }
}

impl fmt::Display for EstimatorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EstimatorSpec::Cml => write!(f, "cml"),
            EstimatorSpec::GoodTuring {
                normalizer,
                numerator,
            } => {
                write!(f, "good-turing")?;
                let mut opts = Vec::new();
                if *normalizer != Normalizer::SampleSize {
                    opts.push(format!("norm={normalizer}"));
                }
                if *numerator == GtNumerator::Unseen {
                    opts.push("numerator=unseen".to_string());
                }
                if !opts.is_empty() {
                    write!(f, ":{}", opts.join(","))?;
                }
                Ok(())
            }
            EstimatorSpec::AddConstant { c } => write!(f, "add-constant:c={c}"),
            EstimatorSpec::Fisher(spec) => write!(f, "{spec}"),
        }
    }
}

/// Splits `a=1,b=x:y=2,c=3` on commas that are not inside a nested spec.
/// A nested spec starts after `init=` and runs until the next key this
/// level knows about.
pub(crate) fn split_options<'a>(body: &'a str, keys: &[&str]) -> Vec<(&'a str, &'a str)> {
    let mut out: Vec<(&str, &str)> = Vec::new();
    let mut start = 0;
    let bytes = body.as_bytes();
    let mut cuts = Vec::new();
    for (i, &b) in bytes.iter().enumerate() {
        if b == b',' {
            let rest = &body[i + 1..];
            let key = rest.split('=').next().unwrap_or("");
            if keys.contains(&key.trim()) {
                cuts.push(i);
            }
        }
    }
    cuts.push(body.len());
    for cut in cuts {
        let item = &body[start..cut];
        start = cut + 1;
        if let Some((k, v)) = item.split_once('=') {
            out.push((k.trim(), v.trim()));
        } else {
            out.push((item.trim(), ""));
        }
    }
    out
}

pub(crate) fn spec_error(spec: &str, reason: impl Into<String>) -> Error {
    Error::EstimatorSpec {
        spec: spec.to_string(),
        reason: reason.into(),
    }
}

pub(crate) fn parse_positive(spec: &str, key: &str, v: &str) -> Result<f64> {
    let x: f64 = v
        .parse()
        .map_err(|_| spec_error(spec, format!("`{key}` must be a number, got `{v}`")))?;
    if !(x > 0.0) || !x.is_finite() {
        return Err(spec_error(spec, format!("`{key}` must be positive, got {v}")));
    }
    Ok(x)
}

impl FromStr for EstimatorSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (head, body) = match s.split_once(':') {
            Some((h, b)) => (h.trim(), b.trim()),
            None => (s, ""),
        };
        match head.to_ascii_lowercase().as_str() {
            "cml" | "ml" => {
                if !body.is_empty() {
                    return Err(spec_error(s, "cml takes no options"));
                }
                Ok(EstimatorSpec::Cml)
            }
            "good-turing" | "gt" => {
                let mut normalizer = Normalizer::SampleSize;
                let mut numerator = GtNumerator::Singletons;
                if !body.is_empty() {
                    for (k, v) in split_options(body, &["norm", "numerator"]) {
                        match k {
                            "norm" if v == "N" => normalizer = Normalizer::SampleSize,
                            "norm" => normalizer = Normalizer::Fixed(parse_positive(s, k, v)?),
                            "numerator" => {
                                numerator = match v {
                                    "singletons" => GtNumerator::Singletons,
                                    "unseen" => GtNumerator::Unseen,
                                    _ => {
                                        return Err(spec_error(
                                            s,
                                            "numerator must be `singletons` or `unseen`",
                                        ))
                                    }
                                }
                            }
                            _ => return Err(spec_error(s, format!("unknown option `{k}`"))),
                        }
                    }
                }
                Ok(EstimatorSpec::GoodTuring {
                    normalizer,
                    numerator,
                })
            }
            "laplace" => {
                if !body.is_empty() {
                    return Err(spec_error(s, "laplace takes no options"));
                }
                Ok(EstimatorSpec::laplace())
            }
            "add-constant" | "ac" => {
                let mut c = None;
                for (k, v) in split_options(body, &["c"]) {
                    match k {
                        "c" => c = Some(parse_positive(s, k, v)?),
                        "" => {}
                        _ => return Err(spec_error(s, format!("unknown option `{k}`"))),
                    }
                }
                let c = c.ok_or_else(|| spec_error(s, "add-constant needs `c=<positive>`"))?;
                Ok(EstimatorSpec::AddConstant { c })
            }
            "fisher" => Ok(EstimatorSpec::Fisher(FisherSpec::parse_body(s, body)?)),
            other => Err(spec_error(s, format!("unknown estimator `{other}`"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture() -> Histogram {
        Histogram::from_counts(vec![2, 0, 3, 0, 2, 1, 0, 2]).unwrap()
    }

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-15
    }

    #[test]
    fn cml_on_fixture() {
        let r = EstimatorSpec::Cml.estimate(&fixture(), 0).unwrap();
        assert_eq!(r.theta_hat, vec![0.2, 0.0, 0.3, 0.0, 0.2, 0.1, 0.0, 0.2]);
        assert_eq!(r.per_element_unseen, vec![(1, 0.0), (3, 0.0), (6, 0.0)]);
        let one = EstimatorSpec::Cml
            .estimate(&Histogram::from_counts(vec![0, 4, 0]).unwrap(), 0)
            .unwrap();
        assert_eq!(one.theta_hat, vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn good_turing_on_fixture() {
        let r = EstimatorSpec::good_turing().estimate(&fixture(), 0).unwrap();
        assert!(close(r.unseen_total, 0.1));
        for (_, v) in &r.per_element_unseen {
            assert!(close(*v, 1.0 / 30.0));
        }
        assert!((r.theta_hat.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        // every symbol at least twice and one unseen: floor of one singleton
        let h = Histogram::from_counts(vec![2, 3, 0, 2]).unwrap();
        let (total, per) = EstimatorSpec::good_turing().unseen_assignment(&h);
        assert!(close(total, 1.0 / 7.0));
        assert!(close(per.unwrap(), 1.0 / 7.0));
        // literal unseen-count numerator
        let lit: EstimatorSpec = "good-turing:numerator=unseen".parse().unwrap();
        assert!(close(lit.unseen_assignment(&fixture()).0, 0.3));
    }

    #[test]
    fn add_constant_on_fixture() {
        let r = EstimatorSpec::laplace().estimate(&fixture(), 0).unwrap();
        assert!(close(r.unseen_total, 1.0 / 16.0));
        for (_, v) in &r.per_element_unseen {
            assert!(close(*v, 1.0 / 48.0));
        }
        assert!((r.theta_hat.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        let tiny = EstimatorSpec::AddConstant { c: 1e-12 };
        assert!(tiny.unseen_assignment(&fixture()).0 < 1e-12);
    }

    #[test]
    fn nothing_unseen() {
        let h = Histogram::from_counts(vec![1, 2, 1]).unwrap();
        for e in [EstimatorSpec::good_turing(), EstimatorSpec::laplace()] {
            let r = e.estimate(&h, 0).unwrap();
            assert!(r.per_element_unseen.is_empty());
            assert!(r.theta_hat.iter().all(|t| *t > 0.0));
        }
        let (total, _) = EstimatorSpec::laplace().unseen_assignment(&h);
        assert!(close(total, 1.0 / 8.0));
        assert_eq!(EstimatorSpec::good_turing().unseen_assignment(&h).0, 0.0);
    }

    #[test]
    fn parse_and_display_round_trip() {
        for s in [
            "cml",
            "good-turing",
            "good-turing:norm=12.5",
            "good-turing:numerator=unseen",
            "add-constant:c=1",
            "add-constant:c=0.5",
            "fisher:init=add-constant:c=1,K=5,psi=1/N,mc=2000",
            "fisher:init=good-turing,K=2,psi=0.01,mc=100",
        ] {
            let e: EstimatorSpec = s.parse().unwrap();
            assert_eq!(e.to_string(), s);
        }
        assert_eq!("laplace".parse::<EstimatorSpec>().unwrap(), EstimatorSpec::laplace());
        for bad in ["", "foo", "add-constant", "add-constant:c=0", "add-constant:c=x", "cml:c=1"] {
            assert!(bad.parse::<EstimatorSpec>().is_err(), "{bad}");
        }
    }
}
