//! Missing-mass bias `b` and the auxiliary matrix `S` of an estimator.
//!
//! `b_m = E[(θ̂_m - θ_m) 1{x ∈ A_m}]` and row `m` of `S` is
//! `E[θ̂_m (v + N/(1-θ_m) e_m)ᵀ 1{x ∈ A_m}]` with `v_l = C_l / θ_l`, the
//! gradient of `E[θ̂_m | A_m] Pr(A_m)` with respect to `θ`.

use std::fmt;
use std::io::Write;

use nalgebra::{DMatrix, DVector};

use crate::enumerate;
use crate::error::Result;
use crate::estimators::EstimatorSpec;
use crate::linalg::NullspaceBasis;
use crate::model::{Histogram, Pmf, Sampler};
use crate::sim::{self, tag, Exec};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    ClosedForm,
    Enumeration,
    MonteCarlo { samples: usize, seed: u64 },
}

impl Provenance {
    pub fn label(&self) -> &'static str {
        match self {
            Provenance::ClosedForm => "closed_form",
            Provenance::Enumeration => "enumeration",
            Provenance::MonteCarlo { .. } => "monte_carlo",
        }
    }
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Provenance::MonteCarlo { samples, seed } => {
                write!(f, "monte_carlo(samples={samples},seed={seed})")
            }
            p => f.write_str(p.label()),
        }
    }
}

/// How an expectation over samples is computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExpectationMode {
    Enumerate { max_states: u64 },
    MonteCarlo { samples: usize, seed: u64 },
}

impl ExpectationMode {
    pub fn enumerate() -> Self {
        ExpectationMode::Enumerate {
            max_states: enumerate::DEFAULT_MAX_STATES,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BiasProfile {
    pub b: DVector<f64>,
    pub s: DMatrix<f64>,
    pub provenance: Provenance,
    pub b_se: Option<DVector<f64>>,
    pub s_se: Option<DMatrix<f64>>,
}

impl BiasProfile {
    pub fn m(&self) -> usize {
        self.b.len()
    }

    /// Profile of an estimator that is missing-mass unbiased with
    /// `E[θ̂_m | A_m] = θ_m`: `b = 0`, `S = diag(Pr(A_m))`.
    pub fn unbiased(pmf: &Pmf, n: u32) -> Self {
        let pr = DVector::from_vec(crate::model::pr_unobserved_all(pmf, n));
        Self {
            b: DVector::zeros(pmf.m()),
            s: DMatrix::from_diagonal(&pr),
            provenance: Provenance::ClosedForm,
            b_se: None,
            s_se: None,
        }
    }

    /// Writes `quantity,row,col,value,stderr,provenance,samples,seed` rows,
    /// indices 1-based.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["quantity", "row", "col", "value", "stderr", "provenance", "samples", "seed"])?;
        let (samples, seed) = match self.provenance {
            Provenance::MonteCarlo { samples, seed } => (samples.to_string(), seed.to_string()),
            _ => (String::new(), String::new()),
        };
        let prov = self.provenance.label();
        for i in 0..self.m() {
            let se = self.b_se.as_ref().map(|v| format!("{:?}", v[i])).unwrap_or_default();
            out.write_record([
                "b",
                &(i + 1).to_string(),
                "",
                &format!("{:?}", self.b[i]),
                &se,
                prov,
                &samples,
                &seed,
            ])?;
        }
        for i in 0..self.m() {
            for j in 0..self.m() {
                let se = self.s_se.as_ref().map(|v| format!("{:?}", v[(i, j)])).unwrap_or_default();
                out.write_record([
                    "S",
                    &(i + 1).to_string(),
                    &(j + 1).to_string(),
                    &format!("{:?}", self.s[(i, j)]),
                    &se,
                    prov,
                    &samples,
                    &seed,
                ])?;
            }
        }
        out.flush()?;
        Ok(())
    }
}

/// Closed-form CML profile: `b_m = -θ_m (1-θ_m)^N`, `S = 0`.
pub fn bias_cml(pmf: &Pmf, n: u32) -> BiasProfile {
    let b = DVector::from_iterator(
        pmf.m(),
        pmf.theta().iter().map(|t| -t * (1.0 - t).powi(n as i32)),
    );
    BiasProfile {
        b,
        s: DMatrix::zeros(pmf.m(), pmf.m()),
        provenance: Provenance::ClosedForm,
        b_se: None,
        s_se: None,
    }
}

/// Row-major sums of per-sample contributions to `b` and `S`.
#[derive(Debug, Clone)]
struct ProfileAcc {
    m: usize,
    b: Vec<f64>,
    b2: Vec<f64>,
    s: Vec<f64>,
    s2: Vec<f64>,
    second_moments: bool,
}

impl ProfileAcc {
    fn new(m: usize, second_moments: bool) -> Self {
        let k = if second_moments { 1 } else { 0 };
        Self {
            m,
            b: vec![0.0; m],
            b2: vec![0.0; m * k],
            s: vec![0.0; m * m],
            s2: vec![0.0; m * m * k],
            second_moments,
        }
    }

    /// Adds `weight ×` the contribution of one histogram with estimate `theta_hat`.
    fn add(&mut self, pmf: &Pmf, counts: &[u32], n: u32, theta_hat: &[f64], weight: f64) {
        let theta = pmf.theta();
        let nf = n as f64;
        for m in 0..self.m {
            if counts[m] != 0 {
                continue;
            }
            let est = theta_hat[m];
            let err = est - theta[m];
            self.b[m] += weight * err;
            if self.second_moments {
                self.b2[m] += weight * err * err;
            }
            let row = m * self.m;
            for (l, &c) in counts.iter().enumerate() {
                if c == 0 {
                    continue;
                }
                let x = est * c as f64 / theta[l];
                self.s[row + l] += weight * x;
                if self.second_moments {
                    self.s2[row + l] += weight * x * x;
                }
            }
            let x = est * nf / (1.0 - theta[m]);
            self.s[row + m] += weight * x;
            if self.second_moments {
                self.s2[row + m] += weight * x * x;
            }
        }
    }

    fn merge(&mut self, o: ProfileAcc) {
        for (a, b) in self.b.iter_mut().zip(o.b) {
            *a += b;
        }
        for (a, b) in self.b2.iter_mut().zip(o.b2) {
            *a += b;
        }
        for (a, b) in self.s.iter_mut().zip(o.s) {
            *a += b;
        }
        for (a, b) in self.s2.iter_mut().zip(o.s2) {
            *a += b;
        }
    }
}

fn se_of(sum: f64, sum_sq: f64, n: f64) -> f64 {
    let var = ((sum_sq - sum * sum / n) / (n - 1.0)).max(0.0);
    (var / n).sqrt()
}

/// Estimate for one histogram: a fast path for closed-form estimators.
pub(crate) fn theta_hat_for(
    est: &EstimatorSpec,
    hist: &Histogram,
    seed: u64,
    buf: &mut Vec<f64>,
) -> Result<()> {
    if est.is_natural() {
        let (_, per) = est.unseen_assignment(hist);
        buf.clear();
        buf.resize(hist.m(), 0.0);
        if let Some(v) = per {
            for m in hist.unseen() {
                buf[m] = v;
            }
        }
    } else {
        *buf = est.estimate(hist, seed)?.theta_hat;
    }
    Ok(())
}

/// `b` and `S` of `est` at `pmf`, by exact enumeration or Monte Carlo.
pub fn bias_empirical(
    est: &EstimatorSpec,
    pmf: &Pmf,
    n: u32,
    mode: ExpectationMode,
    exec: Exec,
) -> Result<BiasProfile> {
    profile_impl(est, pmf, n, mode, exec, true)
}

/// Same as [`bias_empirical`] without standard errors; used inside Fisher scoring.
pub(crate) fn bias_profile_fast(
    est: &EstimatorSpec,
    pmf: &Pmf,
    n: u32,
    samples: usize,
    seed: u64,
    exec: Exec,
) -> Result<BiasProfile> {
    profile_impl(est, pmf, n, ExpectationMode::MonteCarlo { samples, seed }, exec, false)
}

fn profile_impl(
    est: &EstimatorSpec,
    pmf: &Pmf,
    n: u32,
    mode: ExpectationMode,
    exec: Exec,
    with_se: bool,
) -> Result<BiasProfile> {
    let m = pmf.m();
    match mode {
        ExpectationMode::Enumerate { max_states } => {
            enumerate::check_cutoff(m, n, max_states)?;
            let mut acc = ProfileAcc::new(m, false);
            let mut buf = Vec::new();
            let mut failure = None;
            let mut index = 0u64;
            enumerate::for_each_histogram(pmf, n, |counts, p| {
                index += 1;
                if failure.is_some() || !counts.contains(&0) {
                    return;
                }
                let hist = Histogram::from_counts(counts.to_vec()).expect("non-empty histogram");
                match theta_hat_for(est, &hist, sim::derive(0, &[tag::FISHER, index]), &mut buf) {
                    Ok(()) => acc.add(pmf, counts, n, &buf, p),
                    Err(e) => failure = Some(e),
                }
            });
            if let Some(e) = failure {
                return Err(e);
            }
            Ok(BiasProfile {
                b: DVector::from_vec(acc.b),
                s: DMatrix::from_row_slice(m, m, &acc.s),
                provenance: Provenance::Enumeration,
                b_se: None,
                s_se: None,
            })
        }
        ExpectationMode::MonteCarlo { samples, seed } => {
            if samples == 0 {
                return Err(crate::Error::InvalidArgument("Monte Carlo needs at least one sample".into()));
            }
            let sampler = Sampler::new(pmf);
            let acc = sim::fold_trials(
                exec,
                samples,
                || (ProfileAcc::new(m, with_se), Vec::new(), Vec::new(), None),
                |(acc, counts, buf, err): &mut (ProfileAcc, Vec<u32>, Vec<f64>, Option<crate::Error>), t| {
                    if err.is_some() {
                        return;
                    }
                    let mut rng = sim::stream(seed, &[tag::PROFILE, t as u64]);
                    sampler.draw_counts(&mut rng, n, counts);
                    if !counts.contains(&0) {
                        return;
                    }
                    let hist = Histogram::from_counts(counts.clone()).expect("n >= 1");
                    let inner = sim::derive(seed, &[tag::FISHER, t as u64]);
                    match theta_hat_for(est, &hist, inner, buf) {
                        Ok(()) => acc.add(pmf, counts, n, buf, 1.0),
                        Err(e) => *err = Some(e),
                    }
                },
                |a, b| {
                    if a.3.is_none() {
                        a.3 = b.3;
                    }
                    a.0.merge(b.0);
                },
            );
            if let Some(e) = acc.3 {
                return Err(e);
            }
            let acc = acc.0;
            let k = samples as f64;
            let b = DVector::from_iterator(m, acc.b.iter().map(|x| x / k));
            let s = DMatrix::from_row_slice(m, m, &acc.s) / k;
            let (b_se, s_se) = if with_se && samples > 1 {
                (
                    Some(DVector::from_iterator(
                        m,
                        (0..m).map(|i| se_of(acc.b[i], acc.b2[i], k)),
                    )),
                    Some(DMatrix::from_fn(m, m, |i, j| {
                        se_of(acc.s[i * m + j], acc.s2[i * m + j], k)
                    })),
                )
            } else {
                (None, None)
            };
            Ok(BiasProfile {
                b,
                s,
                provenance: Provenance::MonteCarlo { samples, seed },
                b_se,
                s_se,
            })
        }
    }
}

/// Distance of a bias vector from the constant vectors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Defect {
    /// `‖Uᵀb‖₂`; zero exactly when `b = β·1`.
    pub norm: f64,
    /// `mean(b)`.
    pub beta: f64,
}

pub fn unbiasedness_defect(b: &DVector<f64>, basis: &NullspaceBasis) -> Defect {
    Defect {
        norm: (basis.matrix().transpose() * b).norm(),
        beta: b.mean(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::build_nullspace;

    #[test]
    fn cml_closed_form_values() {
        let p = bias_cml(&Pmf::uniform(3).unwrap(), 2);
        for v in p.b.iter() {
            assert!((v + 4.0 / 27.0).abs() < 1e-15);
        }
        assert_eq!(p.s, DMatrix::zeros(3, 3));
        let far = bias_cml(&Pmf::zipf(4, 1.0).unwrap(), 2000);
        assert!(far.b.amax() < 1e-40);
    }

    #[test]
    fn cml_enumeration_matches_closed_form() {
        for pmf in [Pmf::uniform(3).unwrap(), Pmf::zipf(3, 1.0).unwrap(), Pmf::zipf(4, 2.0).unwrap()] {
            for n in 1..5 {
                let e = bias_empirical(&EstimatorSpec::Cml, &pmf, n, ExpectationMode::enumerate(), Exec::Sequential)
                    .unwrap();
                let c = bias_cml(&pmf, n);
                assert!((e.b - c.b).amax() < 1e-12);
                assert!(e.s.amax() < 1e-12);
            }
        }
    }

    #[test]
    fn add_constant_symmetric_under_uniform() {
        let p = bias_empirical(
            &EstimatorSpec::laplace(),
            &Pmf::uniform(3).unwrap(),
            2,
            ExpectationMode::enumerate(),
            Exec::Sequential,
        )
        .unwrap();
        assert!((p.b[0] - p.b[1]).abs() < 1e-15 && (p.b[1] - p.b[2]).abs() < 1e-15);
    }

    #[test]
    fn enumerate_refuses_large_spaces() {
        let e = bias_empirical(
            &EstimatorSpec::Cml,
            &Pmf::uniform(10).unwrap(),
            7,
            ExpectationMode::enumerate(),
            Exec::Sequential,
        );
        assert!(matches!(e, Err(crate::Error::EnumerationTooLarge { .. })));
    }

    #[test]
    fn defect_examples() {
        let u = build_nullspace(5).unwrap();
        assert_eq!(unbiasedness_defect(&DVector::zeros(5), &u).norm, 0.0);
        let c = unbiasedness_defect(&DVector::from_element(5, 5.0), &u);
        assert!(c.norm < 1e-12 && (c.beta - 5.0).abs() < 1e-15);
        let mut e1 = DVector::zeros(5);
        e1[0] = 1.0;
        assert!((unbiasedness_defect(&e1, &u).norm - (0.8f64).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn cml_defect_zero_only_for_uniform() {
        let u = build_nullspace(4).unwrap();
        assert!(unbiasedness_defect(&bias_cml(&Pmf::uniform(4).unwrap(), 3).b, &u).norm < 1e-12);
        assert!(unbiasedness_defect(&bias_cml(&Pmf::zipf(4, 1.0).unwrap(), 3).b, &u).norm > 1e-3);
    }

    #[test]
    fn csv_export_has_metadata() {
        let p = bias_empirical(
            &EstimatorSpec::laplace(),
            &Pmf::zipf(3, 1.0).unwrap(),
            3,
            ExpectationMode::MonteCarlo { samples: 200, seed: 4 },
            Exec::Sequential,
        )
        .unwrap();
        let mut buf = Vec::new();
        p.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1 + 3 + 9);
        assert!(text.lines().nth(1).unwrap().ends_with("monte_carlo,200,4"));
    }
}
