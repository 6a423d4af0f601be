//! Classical CCRB, the missing-mass CCRB (mmCCRB) and its special cases, and
//! the per-symbol expression that attains it.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::bias::{self, BiasProfile, ExpectationMode, Provenance};
use crate::error::{Error, Result};
use crate::estimators::EstimatorSpec;
use crate::information::{self, MmInfo, MmfimRoute};
use crate::linalg::{self, NullspaceBasis};
use crate::model::{self, Histogram, Pmf, Sampler};
use crate::sim::{self, tag, Exec, Moments};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundKind {
    Ccrb,
    MmccrbGeneral,
    MmccrbIid,
    MmccrbUnbiased,
    MmccrbCml,
    MmccrbUniformUnbiased,
}

impl BoundKind {
    pub fn label(self) -> &'static str {
        match self {
            BoundKind::Ccrb => "ccrb",
            BoundKind::MmccrbGeneral => "mmccrb-general",
            BoundKind::MmccrbIid => "mmccrb",
            BoundKind::MmccrbUnbiased => "mmccrb-unbiased",
            BoundKind::MmccrbCml => "mmccrb-cml",
            BoundKind::MmccrbUniformUnbiased => "mmccrb-uniform",
        }
    }
}

/// A bound value with its two pieces.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    pub kind: BoundKind,
    pub value: f64,
    /// `trace(S U (UᵀJ⁽⁰⁾U)⁻¹ Uᵀ Sᵀ)`, or the whole CCRB.
    pub trace_term: f64,
    /// `Σ_m b_m² / Pr(A_m)`.
    pub bias_penalty: f64,
    /// Where the inputs came from (closed form, enumeration, Monte Carlo).
    pub provenance: Provenance,
    /// Monte Carlo standard error of `value`, when the profile was sampled.
    pub standard_error: Option<f64>,
}

impl BoundReport {
    fn new(kind: BoundKind, trace_term: f64, bias_penalty: f64, provenance: Provenance) -> Self {
        Self {
            kind,
            value: trace_term + bias_penalty,
            trace_term,
            bias_penalty,
            provenance,
            standard_error: None,
        }
    }
}

fn check_dims(pmf: &Pmf, basis: &NullspaceBasis) -> Result<()> {
    if pmf.m() != basis.m() {
        return Err(Error::Dimension(format!(
            "basis is for M = {} but pmf has M = {}",
            basis.m(),
            pmf.m()
        )));
    }
    Ok(())
}

/// `(1/N) trace((Uᵀ diag⁻¹(θ) U)⁻¹)`.
pub fn ccrb_trace(pmf: &Pmf, n: u32, basis: &NullspaceBasis) -> Result<BoundReport> {
    check_dims(pmf, basis)?;
    let inv_theta = DMatrix::from_diagonal(&DVector::from_iterator(
        pmf.m(),
        pmf.theta().iter().map(|t| 1.0 / t),
    ));
    let inv = linalg::inverse_projected(&basis.project(&inv_theta), linalg::DEFAULT_CONDITION_CAP)?;
    let value = inv.trace() / n as f64;
    Ok(BoundReport::new(BoundKind::Ccrb, value, 0.0, Provenance::ClosedForm))
}

fn bias_penalty(b: &DVector<f64>, pmf: &Pmf, n: u32) -> f64 {
    (0..pmf.m())
        .map(|m| b[m] * b[m] / model::pr_unobserved(pmf, n, m))
        .sum()
}

fn trace_term(s: &DMatrix<f64>, x: &DMatrix<f64>) -> f64 {
    // trace(S X Sᵀ) = Σ_ij (S X)_ij S_ij
    (s * x).component_mul(s).sum()
}

fn check_profile(profile: &BiasProfile, pmf: &Pmf) -> Result<()> {
    if profile.m() != pmf.m() || profile.s.nrows() != pmf.m() || profile.s.ncols() != pmf.m() {
        return Err(Error::Dimension(format!(
            "bias profile has M = {} but pmf has M = {}",
            profile.m(),
            pmf.m()
        )));
    }
    Ok(())
}

/// mmCCRB for i.i.d. sampling, from a profile and an information context
/// built at the same point.
pub fn mmccrb(profile: &BiasProfile, info: &MmInfo, pmf: &Pmf) -> Result<BoundReport> {
    check_profile(profile, pmf)?;
    let t = trace_term(&profile.s, &info.x);
    let p = bias_penalty(&profile.b, pmf, info.n);
    Ok(BoundReport::new(BoundKind::MmccrbIid, t, p, profile.provenance))
}

/// mmCCRB from an arbitrary projected mmFIM `UᵀJ⁽⁰⁾U`.
pub fn mmccrb_general(
    profile: &BiasProfile,
    projected_mmfim: &DMatrix<f64>,
    pmf: &Pmf,
    n: u32,
    basis: &NullspaceBasis,
) -> Result<BoundReport> {
    check_dims(pmf, basis)?;
    let info = MmInfo::from_projected(
        projected_mmfim.clone(),
        n,
        basis,
        MmfimRoute::ClosedForm,
        linalg::DEFAULT_CONDITION_CAP,
    )?;
    let mut r = mmccrb(profile, &info, pmf)?;
    r.kind = BoundKind::MmccrbGeneral;
    Ok(r)
}

/// Bound for missing-mass unbiased estimators:
/// `(1/N) Σ_m (1-θ_m)^{2N} [U(UᵀDU)⁻¹Uᵀ]_mm`.
pub fn mmccrb_unbiased(
    pmf: &Pmf,
    n: u32,
    basis: &NullspaceBasis,
    route: MmfimRoute,
) -> Result<BoundReport> {
    check_dims(pmf, basis)?;
    let d = DMatrix::from_diagonal(&information::dmat_for(pmf, n, route));
    let x = linalg::projected_inverse_quadratic(&d, basis)?;
    let value: f64 = (0..pmf.m())
        .map(|m| {
            let pr = model::pr_unobserved(pmf, n, m);
            pr * pr * x[(m, m)]
        })
        .sum::<f64>()
        / n as f64;
    Ok(BoundReport::new(BoundKind::MmccrbUnbiased, value, 0.0, Provenance::ClosedForm))
}

/// mmCCRB with the CML profile; equals the CML mmMSE `Σ θ_m² (1-θ_m)^N`.
pub fn mmccrb_cml(pmf: &Pmf, n: u32, basis: &NullspaceBasis, route: MmfimRoute) -> Result<BoundReport> {
    check_dims(pmf, basis)?;
    let info = MmInfo::new(pmf, n, basis, route)?;
    let mut r = mmccrb(&bias::bias_cml(pmf, n), &info, pmf)?;
    r.kind = BoundKind::MmccrbCml;
    Ok(r)
}

/// `(1/N) ((M-1)/M)^{2N} (M-1)³ / (M⁴ - 2M³)`, the unbiased bound at the uniform pmf.
pub fn mmccrb_uniform_closed_form(m: usize, n: u32) -> Result<BoundReport> {
    if m <= 2 {
        return Err(Error::SingularInformation {
            condition: f64::INFINITY,
            cap: linalg::DEFAULT_CONDITION_CAP,
        });
    }
    if n == 0 {
        return Err(Error::InvalidArgument("N must be at least 1".into()));
    }
    let mf = m as f64;
    let value = ((mf - 1.0) / mf).powi(2 * n as i32) * (mf - 1.0).powi(3)
        / (mf.powi(4) - 2.0 * mf.powi(3))
        / n as f64;
    Ok(BoundReport::new(
        BoundKind::MmccrbUniformUnbiased,
        value,
        0.0,
        Provenance::ClosedForm,
    ))
}

/// Interval of real `M` on which the uniform closed form increases with `M`:
/// `N + 2 ± sqrt(N² - 2)`. `None` for `N = 1`, where it decreases everywhere.
pub fn uniform_bound_increasing_interval(n: u32) -> Option<(f64, f64)> {
    let nf = n as f64;
    let disc = nf * nf - 2.0;
    if disc <= 0.0 {
        return None;
    }
    Some((nf + 2.0 - disc.sqrt(), nf + 2.0 + disc.sqrt()))
}

/// `b_m / Pr(A_m) + [S U (UᵀJ⁽⁰⁾U)⁻¹ Uᵀ Δ(x, θ)]_mm` for each unseen `m`.
/// An estimator taking these values on the unseen symbols attains the bound.
pub fn efficient_error_expression(
    profile: &BiasProfile,
    info: &MmInfo,
    pmf: &Pmf,
    hist: &Histogram,
) -> Result<Vec<(usize, f64)>> {
    check_profile(profile, pmf)?;
    if hist.m() != pmf.m() {
        return Err(Error::Dimension("histogram and pmf disagree on M".into()));
    }
    let n = hist.n();
    let unseen: Vec<usize> = hist.unseen().collect();
    if unseen.is_empty() {
        return Ok(Vec::new());
    }
    let sx = &profile.s * &info.x;
    let delta = information::score_matrix(pmf, hist).delta;
    Ok(unseen
        .into_iter()
        .map(|m| {
            let lead = profile.b[m] / model::pr_unobserved(pmf, n, m);
            let quad = sx.row(m).dot(&delta.column(m).transpose());
            (m, lead + quad)
        })
        .collect())
}

/// Delta-method standard error of an mmCCRB built from a Monte Carlo profile.
/// Replays the profile's draws, so it must be given the same `samples` and `seed`.
#[allow(clippy::too_many_arguments)]
pub fn mmccrb_standard_error(
    est: &EstimatorSpec,
    pmf: &Pmf,
    n: u32,
    samples: usize,
    seed: u64,
    profile: &BiasProfile,
    info: &MmInfo,
    exec: Exec,
) -> Result<f64> {
    let m = pmf.m();
    let theta = pmf.theta();
    let pr = model::pr_unobserved_all(pmf, n);
    let grad_b: Vec<f64> = (0..m).map(|i| 2.0 * profile.b[i] / pr[i]).collect();
    let grad_s = (&profile.s * &info.x) * 2.0;
    let sampler = Sampler::new(pmf);
    let nf = n as f64;
    let acc = sim::fold_trials(
        exec,
        samples,
        || (Moments::default(), Vec::new(), Vec::new(), None),
        |(mom, counts, buf, err): &mut (Moments, Vec<u32>, Vec<f64>, Option<Error>), t| {
            if err.is_some() {
                return;
            }
            let mut rng = sim::stream(seed, &[tag::PROFILE, t as u64]);
            sampler.draw_counts(&mut rng, n, counts);
            let mut lin = 0.0;
            if counts.contains(&0) {
                let hist = Histogram::from_counts(counts.clone()).expect("n >= 1");
                if let Err(e) =
                    bias::theta_hat_for(est, &hist, sim::derive(seed, &[tag::FISHER, t as u64]), buf)
                {
                    *err = Some(e);
                    return;
                }
                for a in 0..m {
                    if counts[a] != 0 {
                        continue;
                    }
                    let e = buf[a];
                    lin += grad_b[a] * (e - theta[a]);
                    for (l, &c) in counts.iter().enumerate() {
                        if c > 0 {
                            lin += grad_s[(a, l)] * e * c as f64 / theta[l];
                        }
                    }
                    lin += grad_s[(a, a)] * e * nf / (1.0 - theta[a]);
                }
            }
            mom.push(lin);
        },
        |a, b| {
            if a.3.is_none() {
                a.3 = b.3;
            }
            a.0.merge(&b.0);
        },
    );
    if let Some(e) = acc.3 {
        return Err(e);
    }
    Ok(acc.0.std_error())
}

/// Bound requested by name in configs and on the command line.
#[derive(Debug, Clone, PartialEq)]
pub enum BoundSpec {
    Ccrb,
    Unbiased,
    Cml,
    UniformClosedForm,
    /// mmCCRB with the profile of the given estimator.
    Estimator(EstimatorSpec),
}

impl fmt::Display for BoundSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BoundSpec::Ccrb => f.write_str("ccrb"),
            BoundSpec::Unbiased => f.write_str("mmccrb-unbiased"),
            BoundSpec::Cml => f.write_str("mmccrb-cml"),
            BoundSpec::UniformClosedForm => f.write_str("mmccrb-uniform"),
            BoundSpec::Estimator(e) => write!(f, "mmccrb:{e}"),
        }
    }
}

impl FromStr for BoundSpec {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s {
            "ccrb" => Ok(BoundSpec::Ccrb),
            "mmccrb-unbiased" => Ok(BoundSpec::Unbiased),
            "mmccrb-cml" => Ok(BoundSpec::Cml),
            "mmccrb-uniform" => Ok(BoundSpec::UniformClosedForm),
            _ => match s.strip_prefix("mmccrb:") {
                Some(est) => Ok(BoundSpec::Estimator(est.parse()?)),
                None => Err(Error::InvalidArgument(format!(
                    "unknown bound `{s}` (expected ccrb, mmccrb-unbiased, mmccrb-cml, \
                     mmccrb-uniform or mmccrb:<estimator>)"
                ))),
            },
        }
    }
}

/// Settings shared by every bound evaluation in a run.
#[derive(Debug, Clone, Copy)]
pub struct BoundSettings {
    pub route: MmfimRoute,
    /// How estimator profiles are obtained when no closed form exists.
    pub profile: ProfileSource,
    pub exec: Exec,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProfileSource {
    /// Enumerate when `M^N` is within `max_states`, otherwise Monte Carlo.
    Auto { max_states: u64, samples: usize, seed: u64 },
    Fixed(ExpectationMode),
}

impl ProfileSource {
    /// The expectation mode used for a problem of size `(m, n)`.
    pub fn mode(self, m: usize, n: u32) -> ExpectationMode {
        match self {
            ProfileSource::Auto {
                max_states,
                samples,
                seed,
            } => {
                if crate::enumerate::check_cutoff(m, n, max_states).is_ok() {
                    ExpectationMode::Enumerate { max_states }
                } else {
                    ExpectationMode::MonteCarlo { samples, seed }
                }
            }
            ProfileSource::Fixed(mode) => mode,
        }
    }
}

/// Evaluates one named bound at `(pmf, n)`.
pub fn evaluate_bound(
    spec: &BoundSpec,
    pmf: &Pmf,
    n: u32,
    basis: &NullspaceBasis,
    settings: &BoundSettings,
) -> Result<BoundReport> {
    match spec {
        BoundSpec::Ccrb => ccrb_trace(pmf, n, basis),
        BoundSpec::Unbiased => mmccrb_unbiased(pmf, n, basis, settings.route),
        BoundSpec::Cml => mmccrb_cml(pmf, n, basis, settings.route),
        BoundSpec::UniformClosedForm => {
            if !pmf.is_uniform() {
                return Err(Error::InvalidArgument(
                    "mmccrb-uniform is only defined for the uniform pmf".into(),
                ));
            }
            mmccrb_uniform_closed_form(pmf.m(), n)
        }
        BoundSpec::Estimator(EstimatorSpec::Cml) => {
            let mut r = mmccrb_cml(pmf, n, basis, settings.route)?;
            r.kind = BoundKind::MmccrbIid;
            Ok(r)
        }
        BoundSpec::Estimator(est) => {
            let info = MmInfo::new(pmf, n, basis, settings.route)?;
            let mode = settings.profile.mode(pmf.m(), n);
            let profile = bias::bias_empirical(est, pmf, n, mode, settings.exec)?;
            let mut r = mmccrb(&profile, &info, pmf)?;
            if let ExpectationMode::MonteCarlo { samples, seed } = mode {
                r.standard_error = Some(mmccrb_standard_error(
                    est,
                    pmf,
                    n,
                    samples,
                    seed,
                    &profile,
                    &info,
                    settings.exec,
                )?);
            }
            Ok(r)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::build_nullspace;

    #[test]
    fn ccrb_uniform_is_cml_trace_mse() {
        // the CML estimator is efficient: its trace MSE is (1 - Σθ²)/N
        for m in 2..8 {
            let u = build_nullspace(m).unwrap();
            for n in [1, 2, 7] {
                let r = ccrb_trace(&Pmf::uniform(m).unwrap(), n, &u).unwrap();
                let expect = (1.0 - 1.0 / m as f64) / n as f64;
                assert!((r.value - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn ccrb_scales_with_n() {
        let p = Pmf::zipf(5, 1.0).unwrap();
        let u = build_nullspace(5).unwrap();
        let a = ccrb_trace(&p, 10, &u).unwrap().value;
        let b = ccrb_trace(&p, 20, &u).unwrap().value;
        assert!((a - 2.0 * b).abs() < 1e-14);
    }

    #[test]
    fn uniform_closed_form_example() {
        let r = mmccrb_uniform_closed_form(3, 1).unwrap();
        assert!((r.value - 32.0 / 243.0).abs() < 1e-15);
        let u = build_nullspace(3).unwrap();
        let p = mmccrb_unbiased(&Pmf::uniform(3).unwrap(), 1, &u, MmfimRoute::ClosedForm).unwrap();
        assert!((p.value - 32.0 / 243.0).abs() < 1e-15);
        assert!(mmccrb_uniform_closed_form(2, 4).is_err());
    }

    #[test]
    fn cml_bound_is_cml_risk() {
        let u = build_nullspace(3).unwrap();
        let r = mmccrb_cml(&Pmf::uniform(3).unwrap(), 2, &u, MmfimRoute::ClosedForm).unwrap();
        assert!((r.value - 4.0 / 27.0).abs() < 1e-15);
        assert_eq!(r.trace_term, 0.0);
    }

    #[test]
    fn unbiased_profile_matches_unbiased_bound() {
        for route in [MmfimRoute::ClosedForm, MmfimRoute::ExactMoments] {
            let p = Pmf::zipf(6, 0.8).unwrap();
            let u = build_nullspace(6).unwrap();
            let info = MmInfo::new(&p, 9, &u, route).unwrap();
            let a = mmccrb(&BiasProfile::unbiased(&p, 9), &info, &p).unwrap();
            let b = mmccrb_unbiased(&p, 9, &u, route).unwrap();
            assert!((a.value - b.value).abs() < 1e-12 * b.value);
        }
    }

    #[test]
    fn m2_is_singular() {
        let u = build_nullspace(2).unwrap();
        let p = Pmf::uniform(2).unwrap();
        let info = MmInfo::new(&p, 3, &u, MmfimRoute::ClosedForm);
        assert!(matches!(info, Err(Error::SingularInformation { .. })));
        assert!(mmccrb_cml(&p, 3, &u, MmfimRoute::ClosedForm).is_err());
        assert!(mmccrb_unbiased(&p, 3, &u, MmfimRoute::ClosedForm).is_err());
    }

    #[test]
    fn zero_s_gives_constant_expression() {
        let p = Pmf::zipf(4, 1.0).unwrap();
        let u = build_nullspace(4).unwrap();
        let info = MmInfo::new(&p, 3, &u, MmfimRoute::ClosedForm).unwrap();
        let prof = bias::bias_cml(&p, 3);
        let h = Histogram::from_counts(vec![2, 1, 0, 0]).unwrap();
        let e = efficient_error_expression(&prof, &info, &p, &h).unwrap();
        assert_eq!(e.len(), 2);
        for (m, v) in e {
            assert!((v + p.theta()[m]).abs() < 1e-15);
        }
        let full = Histogram::from_counts(vec![1, 1, 1, 1]).unwrap();
        assert!(efficient_error_expression(&prof, &info, &p, &full).unwrap().is_empty());
    }

    #[test]
    fn increasing_interval() {
        assert!(uniform_bound_increasing_interval(1).is_none());
        let (lo, hi) = uniform_bound_increasing_interval(4).unwrap();
        assert!((lo - (6.0 - 14f64.sqrt())).abs() < 1e-15);
        assert!((hi - (6.0 + 14f64.sqrt())).abs() < 1e-15);
    }

    #[test]
    fn bound_spec_round_trip() {
        for s in ["ccrb", "mmccrb-unbiased", "mmccrb-cml", "mmccrb-uniform", "mmccrb:add-constant:c=1"] {
            assert_eq!(s.parse::<BoundSpec>().unwrap().to_string(), s);
        }
        assert!("bogus".parse::<BoundSpec>().is_err());
    }
}
