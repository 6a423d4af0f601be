//! Brute-force cross-checks over every sample sequence of small problems.
//!
//! Each check recomputes a quantity by summing over all `M^N` sequences (not
//! histograms) or by finite differences and compares it with the library.

use std::fmt;

use nalgebra::{DMatrix, DVector};

use crate::bias::{self, ExpectationMode};
use crate::bounds::{self, BoundSettings, BoundSpec, ProfileSource};
use crate::estimators::EstimatorSpec;
use crate::information::{self, MmInfo, MmfimRoute};
use crate::linalg::NullspaceBasis;
use crate::model::{self, Histogram, Pmf};
use crate::sim::Exec;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Pass,
    Fail,
    /// A documented discrepancy that is reported but not treated as failure.
    Finding,
    Skipped,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::Finding => "FINDING",
            Status::Skipped => "SKIP",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub status: Status,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct OracleReport {
    pub checks: Vec<Check>,
}

impl OracleReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.status != Status::Fail)
    }

    fn record(&mut self, name: &str, max_err: f64, tol: f64, what: &str) {
        let status = if max_err <= tol { Status::Pass } else { Status::Fail };
        self.checks.push(Check {
            name: name.to_string(),
            status,
            detail: format!("{what}: max deviation {max_err:.3e} (tolerance {tol:.0e})"),
        });
    }
}

impl fmt::Display for OracleReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            writeln!(f, "[{}] {}: {}", c.status, c.name, c.detail)?;
        }
        let count = |s| self.checks.iter().filter(|c| c.status == s).count();
        write!(
            f,
            "{} passed, {} failed, {} findings, {} skipped",
            count(Status::Pass),
            count(Status::Fail),
            count(Status::Finding),
            count(Status::Skipped)
        )
    }
}

/// Calls `f(x, counts, p(x))` for every sequence in `{0..m}^n`.
pub fn for_each_sequence<F: FnMut(&[usize], &[u32], f64)>(theta: &[f64], n: u32, mut f: F) {
    let m = theta.len();
    let n = n as usize;
    let mut x = vec![0usize; n];
    let mut counts = vec![0u32; m];
    loop {
        counts.iter_mut().for_each(|c| *c = 0);
        let mut p = 1.0;
        for &s in &x {
            counts[s] += 1;
            p *= theta[s];
        }
        f(&x, &counts, p);
        let mut i = n;
        loop {
            if i == 0 {
                return;
            }
            i -= 1;
            x[i] += 1;
            if x[i] < m {
                break;
            }
            x[i] = 0;
        }
    }
}

fn natural_estimate(est: &EstimatorSpec, counts: &[u32]) -> Vec<f64> {
    est.estimate(&Histogram::from_counts(counts.to_vec()).unwrap(), 0)
        .unwrap()
        .theta_hat
}

/// `log p(x | x ∈ A_m; θ)` for an arbitrary positive vector `θ`.
fn log_conditional(theta: &[f64], counts: &[u32], m: usize, n: u32) -> f64 {
    counts
        .iter()
        .zip(theta)
        .filter(|(c, _)| **c > 0)
        .map(|(&c, t)| c as f64 * t.ln())
        .sum::<f64>()
        - n as f64 * (1.0 - theta[m]).ln()
}

/// Sequence-level `E[ΔΔᵀ]`, `b`, `S`, `E[ΓΔᵀ]` and `mmMSE` for one estimator.
pub struct BruteForce {
    pub mmfim: DMatrix<f64>,
    pub b: DVector<f64>,
    pub s: DMatrix<f64>,
    pub gamma_delta: DMatrix<f64>,
    pub cond_mean: DVector<f64>,
    pub mmmse: f64,
}

pub fn brute_force(est: &EstimatorSpec, pmf: &Pmf, n: u32) -> BruteForce {
    let m = pmf.m();
    let theta = pmf.theta();
    let nf = n as f64;
    let pr: Vec<f64> = theta.iter().map(|t| (1.0 - t).powi(n as i32)).collect();
    let delta_col = |counts: &[u32], a: usize| -> DVector<f64> {
        let mut d = DVector::from_iterator(m, counts.iter().zip(theta).map(|(&c, t)| c as f64 / t));
        d[a] += nf / (1.0 - theta[a]);
        d
    };
    let mut mmfim = DMatrix::zeros(m, m);
    let mut b = DVector::zeros(m);
    let mut s = DMatrix::zeros(m, m);
    let mut cond_sum = DVector::<f64>::zeros(m);
    let mut mmmse = 0.0;
    for_each_sequence(theta, n, |_, counts, p| {
        if !counts.contains(&0) {
            return;
        }
        let e = natural_estimate(est, counts);
        for a in 0..m {
            if counts[a] != 0 {
                continue;
            }
            let d = delta_col(counts, a);
            mmfim += &d * d.transpose() * p;
            b[a] += p * (e[a] - theta[a]);
            cond_sum[a] += p * e[a];
            let mut row = s.row_mut(a);
            row += d.transpose() * (p * e[a]);
            mmmse += p * (e[a] - theta[a]).powi(2);
        }
    });
    let cond_mean = DVector::from_iterator(m, (0..m).map(|a| cond_sum[a] / pr[a]));
    // second pass: Γ has ε_m = θ̂_m - E[θ̂_m | A_m] on its diagonal
    let mut gamma_delta = DMatrix::zeros(m, m);
    for_each_sequence(theta, n, |_, counts, p| {
        if !counts.contains(&0) {
            return;
        }
        let e = natural_estimate(est, counts);
        for a in 0..m {
            if counts[a] == 0 {
                let d = delta_col(counts, a);
                let mut row = gamma_delta.row_mut(a);
                row += d.transpose() * (p * (e[a] - cond_mean[a]));
            }
        }
    });
    BruteForce {
        mmfim,
        b,
        s,
        gamma_delta,
        cond_mean,
        mmmse,
    }
}

fn rel(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).amax() / b.amax().max(1.0)
}

/// Runs the full suite on problems with at most `max_states` sequences.
pub fn run_oracle(max_states: u64) -> OracleReport {
    let mut report = OracleReport::default();
    let small = |m: usize, n: u32| (m as f64).powi(n as i32) <= max_states as f64;
    let pmfs = |m: usize| {
        vec![
            Pmf::uniform(m).unwrap(),
            Pmf::zipf(m, 1.0).unwrap(),
            Pmf::zipf(m, 2.3).unwrap(),
        ]
    };
    let laplace = EstimatorSpec::laplace();
    let gt = EstimatorSpec::good_turing();

    // unseen-event probabilities and conditional normalization
    let mut e1: f64 = 0.0;
    let mut e2: f64 = 0.0;
    let mut skipped = false;
    for m in 2..=4 {
        for n in 1..=5 {
            if !small(m, n) {
                skipped = true;
                continue;
            }
            for pmf in pmfs(m) {
                let mut mass = vec![0.0; m];
                let mut cond = vec![0.0; m];
                for_each_sequence(pmf.theta(), n, |x, counts, p| {
                    for a in 0..m {
                        if counts[a] == 0 {
                            mass[a] += p;
                            cond[a] += model::conditional_pmf_value(&pmf, x, a);
                        }
                    }
                });
                for a in 0..m {
                    e1 = e1.max((mass[a] - model::pr_unobserved(&pmf, n, a)).abs());
                    e2 = e2.max((cond[a] - 1.0).abs());
                }
            }
        }
    }
    report.record("unseen_probability", e1, 1e-12, "sum of p(x) over A_m vs (1-θ_m)^N, M<=4, N<=5");
    report.record("conditional_normalization", e2, 1e-12, "sum of p(x|A_m) over A_m vs 1");

    // CML: χ-unbiasedness and bound tightness
    let mut e_unb: f64 = 0.0;
    let mut e_tight: f64 = 0.0;
    for n in 1..=4 {
        if !small(3, n) {
            skipped = true;
            continue;
        }
        for pmf in pmfs(3) {
            let mut mean = [0.0; 3];
            for_each_sequence(pmf.theta(), n, |_, counts, p| {
                for a in 0..3 {
                    mean[a] += p * counts[a] as f64 / n as f64;
                }
            });
            for a in 0..3 {
                e_unb = e_unb.max((mean[a] - pmf.theta()[a]).abs());
            }
            let bf = brute_force(&EstimatorSpec::Cml, &pmf, n);
            let closed: f64 = pmf.theta().iter().map(|t| t * t * (1.0 - t).powi(n as i32)).sum();
            let basis = NullspaceBasis::helmert(3).unwrap();
            let bound = bounds::mmccrb_cml(&pmf, n, &basis, MmfimRoute::ClosedForm).unwrap().value;
            e_tight = e_tight.max((bf.mmmse - closed).abs()).max((bound - closed).abs());
        }
    }
    report.record("cml_chi_unbiased", e_unb, 1e-12, "E[C_m/N] vs θ_m, M=3, N<=4");
    report.record("cml_bound_tight", e_tight, 1e-12, "CML mmMSE vs Σθ²(1-θ)^N vs mmCCRB(CML), M=3, N<=4");

    // histogram enumeration, score cross-moment, FIM and mmFIM
    let mut e_hist: f64 = 0.0;
    let mut e_tangent: f64 = 0.0;
    let mut e_residual: f64 = 0.0;
    let mut e_ambient: f64 = 0.0;
    let mut e_exact: f64 = 0.0;
    let mut e_closed: f64 = 0.0;
    let mut e_closed_proj: f64 = 0.0;
    let mut e_fim: f64 = 0.0;
    for (m, n) in [(3, 1), (3, 2), (3, 3), (4, 2), (4, 4), (5, 3)] {
        if !small(m, n) {
            skipped = true;
            continue;
        }
        let u = NullspaceBasis::helmert(m).unwrap();
        for pmf in pmfs(m) {
            let nf = n as f64;
            for est in [&EstimatorSpec::Cml, &laplace, &gt] {
                let bf = brute_force(est, &pmf, n);
                let prof = bias::bias_empirical(est, &pmf, n, ExpectationMode::enumerate(), Exec::Sequential)
                    .unwrap();
                e_hist = e_hist.max((prof.b - &bf.b).amax()).max(rel(&prof.s, &bf.s));
                let gu = &bf.gamma_delta * u.matrix();
                let su = &bf.s * u.matrix();
                e_tangent = e_tangent.max(rel(&gu, &su));
                let resid = DMatrix::from_fn(m, m, |a, _| {
                    let t = pmf.theta()[a];
                    bf.cond_mean[a] * (1.0 - t).powi(n as i32) * nf / (1.0 - t)
                });
                e_residual = e_residual.max(rel(&(&bf.s - &resid), &bf.gamma_delta));
                e_ambient = e_ambient.max(rel(&bf.gamma_delta, &bf.s));
                if est == &EstimatorSpec::Cml {
                    let exact = information::mmfim_exact(&pmf, n);
                    e_exact = e_exact.max(rel(&exact, &bf.mmfim));
                    let closed = information::mmfim_closed_form(&pmf, n);
                    e_closed = e_closed.max(rel(&closed, &bf.mmfim));
                    e_closed_proj = e_closed_proj.max(rel(&u.project(&closed), &u.project(&bf.mmfim)));
                }
            }
            let mut fim = DMatrix::zeros(m, m);
            for_each_sequence(pmf.theta(), n, |_, counts, p| {
                let v = information::score_vector(&pmf, counts);
                fim += &v * v.transpose() * p;
            });
            e_fim = e_fim.max(rel(&fim, &information::fim(&pmf, n)));
        }
    }
    report.record("histogram_vs_sequence_profile", e_hist, 1e-12, "b and S, CML/Laplace/Good-Turing");
    report.record("cross_moment_tangent", e_tangent, 1e-10, "E[ΓΔᵀ]U vs SU");
    report.record(
        "cross_moment_ambient_residual",
        e_residual,
        1e-10,
        "E[ΓΔᵀ] vs S - diag(E[θ̂_m|A_m] Pr(A_m) N/(1-θ_m)) 11ᵀ",
    );
    report.checks.push(Check {
        name: "cross_moment_ambient_entrywise".into(),
        status: Status::Finding,
        detail: format!(
            "E[ΓΔᵀ] vs S in the ambient space differs by up to {e_ambient:.3e} (relative); \
             the identity holds on the tangent space of the simplex only"
        ),
    });
    report.record("fim_enumeration", e_fim, 1e-10, "E[vvᵀ] vs N(N-1)11ᵀ + N diag⁻¹(θ)");
    report.record("mmfim_exact_route", e_exact, 1e-10, "conditional-moment mmFIM vs E[ΔΔᵀ]");
    report.checks.push(Check {
        name: "mmfim_closed_form_vs_enumeration".into(),
        status: if e_closed <= 1e-10 { Status::Pass } else { Status::Finding },
        detail: format!(
            "published closed form vs E[ΔΔᵀ]: full matrix {e_closed:.3e}, projected {e_closed_proj:.3e} (relative)"
        ),
    });

    // score matrix vs central differences
    let mut e_fd: f64 = 0.0;
    for m in 2..=3 {
        for n in 1..=3 {
            for pmf in pmfs(m) {
                for_each_sequence(pmf.theta(), n, |x, counts, _| {
                    let hist = Histogram::from_counts(counts.to_vec()).unwrap();
                    let delta = information::score_matrix(&pmf, &hist).delta;
                    for a in 0..m {
                        if x.contains(&a) {
                            e_fd = e_fd.max(delta.column(a).amax());
                            continue;
                        }
                        for l in 0..m {
                            let h = 1e-6 * pmf.theta()[l].abs().max(1.0);
                            let mut tp = pmf.theta().to_vec();
                            let mut tm = tp.clone();
                            tp[l] += h;
                            tm[l] -= h;
                            let g = (log_conditional(&tp, counts, a, n) - log_conditional(&tm, counts, a, n))
                                / (2.0 * h);
                            e_fd = e_fd.max((g - delta[(l, a)]).abs());
                        }
                    }
                });
            }
        }
    }
    report.record("score_finite_difference", e_fd, 1e-6, "Δ columns vs central differences, M<=3, N<=3");

    // projected identity and basis invariance
    let mut e_proj: f64 = 0.0;
    let mut e_basis: f64 = 0.0;
    for m in 3..=8 {
        let h = NullspaceBasis::helmert(m).unwrap();
        let q = NullspaceBasis::householder(m).unwrap();
        for (i, pmf) in pmfs(m).into_iter().enumerate() {
            let n = 2 + 3 * i as u32;
            for route in [MmfimRoute::ClosedForm, MmfimRoute::ExactMoments] {
                let full = h.project(&information::mmfim(&pmf, n, route));
                let d = DMatrix::from_diagonal(&information::dmat_for(&pmf, n, route));
                let red = h.project(&d) * n as f64;
                e_proj = e_proj.max(rel(&full, &red));
            }
            let settings = BoundSettings {
                route: MmfimRoute::ClosedForm,
                profile: ProfileSource::Fixed(ExpectationMode::MonteCarlo { samples: 400, seed: 1 }),
                exec: Exec::Sequential,
            };
            let specs = [
                BoundSpec::Ccrb,
                BoundSpec::Unbiased,
                BoundSpec::Cml,
                BoundSpec::Estimator(laplace.clone()),
            ];
            for spec in &specs {
                let a = bounds::evaluate_bound(spec, &pmf, n, &h, &settings).map(|r| r.value);
                let b = bounds::evaluate_bound(spec, &pmf, n, &q, &settings).map(|r| r.value);
                if let (Ok(a), Ok(b)) = (a, b) {
                    e_basis = e_basis.max((a - b).abs() / a.abs().max(1e-300));
                }
            }
        }
    }
    report.record("projected_mmfim_identity", e_proj, 1e-10, "UᵀJ⁽⁰⁾U vs N·UᵀDU, both routes, M=3..8");
    report.record("basis_invariance", e_basis, 1e-10, "every bound under Helmert vs Householder bases");

    // bound validity at enumerable sizes
    let mut worst = f64::NEG_INFINITY;
    let mut worst_closed = f64::NEG_INFINITY;
    for (m, n) in [(3, 2), (4, 2), (4, 3), (4, 5), (5, 4)] {
        if !small(m, n) {
            skipped = true;
            continue;
        }
        let u = NullspaceBasis::helmert(m).unwrap();
        for pmf in pmfs(m) {
            for est in [&laplace, &gt] {
                let bf = brute_force(est, &pmf, n);
                let prof = bias::bias_empirical(est, &pmf, n, ExpectationMode::enumerate(), Exec::Sequential)
                    .unwrap();
                for (route, w) in [
                    (MmfimRoute::ExactMoments, &mut worst),
                    (MmfimRoute::ClosedForm, &mut worst_closed),
                ] {
                    if let Ok(info) = MmInfo::new(&pmf, n, &u, route) {
                        let bound = bounds::mmccrb(&prof, &info, &pmf).unwrap().value;
                        *w = w.max((bound - bf.mmmse) / bf.mmmse);
                    }
                }
            }
        }
    }
    report.checks.push(Check {
        name: "bound_below_risk_exact_route".into(),
        status: if worst <= 1e-12 { Status::Pass } else { Status::Fail },
        detail: format!("max (bound - mmMSE)/mmMSE = {worst:.3e}, Laplace and Good-Turing"),
    });
    report.checks.push(Check {
        name: "bound_below_risk_closed_form_route".into(),
        status: if worst_closed <= 1e-12 { Status::Pass } else { Status::Finding },
        detail: format!("max (bound - mmMSE)/mmMSE = {worst_closed:.3e}, Laplace and Good-Turing"),
    });

    if skipped {
        report.checks.push(Check {
            name: "state_limit".into(),
            status: Status::Skipped,
            detail: format!("some problem sizes exceed --max-states {max_states} and were skipped"),
        });
    }
    report
}
