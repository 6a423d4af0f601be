//! Fisher information, the conditional score matrix `Δ`, and the missing-mass
//! Fisher information (mmFIM).

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{self, NullspaceBasis};
use crate::model::{Histogram, Pmf};

/// How the mmFIM is formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MmfimRoute {
    /// The published closed form with the diagonal `D(θ)` of [`dmat`].
    #[default]
    ClosedForm,
    /// Conditional multinomial moments, `E[ΔΔᵀ]` without approximation.
    ExactMoments,
}

impl fmt::Display for MmfimRoute {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MmfimRoute::ClosedForm => "closed-form",
            MmfimRoute::ExactMoments => "exact",
        })
    }
}

impl FromStr for MmfimRoute {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "closed-form" => Ok(MmfimRoute::ClosedForm),
            "exact" => Ok(MmfimRoute::ExactMoments),
            _ => Err(Error::InvalidArgument(format!(
                "mmfim route must be `closed-form` or `exact`, got `{s}`"
            ))),
        }
    }
}

/// `1 - θ_m` computed as the sum of the other entries, which keeps
/// cancellations exact when `M = 2`.
fn complements(theta: &[f64]) -> Vec<f64> {
    (0..theta.len())
        .map(|m| {
            theta
                .iter()
                .enumerate()
                .filter(|(l, _)| *l != m)
                .map(|(_, t)| t)
                .sum()
        })
        .collect()
}

/// `J(θ) = N(N-1)·11ᵀ + N·diag⁻¹(θ)`.
pub fn fim(pmf: &Pmf, n: u32) -> DMatrix<f64> {
    let m = pmf.m();
    let nf = n as f64;
    let mut j = DMatrix::from_element(m, m, nf * (nf - 1.0));
    for (i, t) in pmf.theta().iter().enumerate() {
        j[(i, i)] += nf / t;
    }
    j
}

/// Gradient of the log-likelihood of a sample, `v_l = C_l / θ_l`.
pub fn score_vector(pmf: &Pmf, counts: &[u32]) -> DVector<f64> {
    DVector::from_iterator(
        pmf.m(),
        counts.iter().zip(pmf.theta()).map(|(&c, t)| c as f64 / t),
    )
}

/// Column `m` is the gradient of `log p(x | x ∈ A_m; θ)` when symbol `m` is
/// unseen and zero otherwise.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    pub delta: DMatrix<f64>,
}

pub fn score_matrix(pmf: &Pmf, hist: &Histogram) -> ScoreMatrix {
    let counts = hist.counts();
    let m = pmf.m();
    let n = hist.n() as f64;
    let v = score_vector(pmf, counts);
    let mut delta = DMatrix::zeros(m, m);
    for col in hist.unseen() {
        delta.set_column(col, &v);
        delta[(col, col)] += n / (1.0 - pmf.theta()[col]);
    }
    ScoreMatrix { delta }
}

/// Diagonal of the published `D(θ)`:
/// `Σ_{l≠m} 1/(θ_l(1-θ_m)) - 1/(1-θ_m)²`.
pub fn dmat(pmf: &Pmf) -> DVector<f64> {
    let theta = pmf.theta();
    let s = complements(theta);
    DVector::from_iterator(
        theta.len(),
        (0..theta.len()).map(|m| {
            let others: f64 = theta
                .iter()
                .enumerate()
                .filter(|(l, _)| *l != m)
                .map(|(_, t)| 1.0 / t)
                .sum();
            (others - 1.0 / s[m]) / s[m]
        }),
    )
}

/// Diagonal whose projection gives the exact projected mmFIM:
/// `D̃_kk = (1/θ_k) Σ_{m≠k} (1-θ_m)^{N-1} - (1-θ_k)^{N-2}`.
pub fn dmat_exact(pmf: &Pmf, n: u32) -> DVector<f64> {
    let theta = pmf.theta();
    let s = complements(theta);
    let e = n as i32 - 2;
    DVector::from_iterator(
        theta.len(),
        (0..theta.len()).map(|k| {
            let cross: f64 = (0..theta.len())
                .filter(|&m| m != k)
                .map(|m| s[m].powi(e) * (s[m] / theta[k]))
                .sum();
            cross - s[k].powi(e)
        }),
    )
}

pub fn dmat_for(pmf: &Pmf, n: u32, route: MmfimRoute) -> DVector<f64> {
    match route {
        MmfimRoute::ClosedForm => dmat(pmf),
        MmfimRoute::ExactMoments => dmat_exact(pmf, n),
    }
}

/// The published closed-form mmFIM.
pub fn mmfim_closed_form(pmf: &Pmf, n: u32) -> DMatrix<f64> {
    let m = pmf.m();
    let nf = n as f64;
    let theta = pmf.theta();
    let ones_coef: f64 = theta
        .iter()
        .map(|t| nf * (nf - 1.0) / (1.0 - t).powi(2) * (1.0 - t).powi(n as i32))
        .sum();
    let mut j = DMatrix::from_element(m, m, ones_coef);
    for (k, t) in theta.iter().enumerate() {
        let c = nf / (1.0 - t).powi(2);
        for i in 0..m {
            j[(k, i)] += c;
            j[(i, k)] += c;
        }
    }
    let d = dmat(pmf);
    for k in 0..m {
        j[(k, k)] += nf * d[k];
    }
    j
}

/// `E[ΔΔᵀ]` from conditional multinomial moments.
pub fn mmfim_exact(pmf: &Pmf, n: u32) -> DMatrix<f64> {
    let m = pmf.m();
    let nf = n as f64;
    let theta = pmf.theta();
    let s = complements(theta);
    let mut j = DMatrix::zeros(m, m);
    for a in 0..m {
        let pr = s[a].powi(n as i32);
        let w = nf / s[a];
        let outer = nf / (s[a] * s[a]);
        for k in 0..m {
            for l in 0..m {
                let mut v = w * w;
                if k != a && l != a {
                    v -= outer;
                    if k == l {
                        v += w / theta[k];
                    }
                }
                j[(k, l)] += pr * v;
            }
        }
    }
    j
}

pub fn mmfim(pmf: &Pmf, n: u32, route: MmfimRoute) -> DMatrix<f64> {
    match route {
        MmfimRoute::ClosedForm => mmfim_closed_form(pmf, n),
        MmfimRoute::ExactMoments => mmfim_exact(pmf, n),
    }
}

/// `J`, `J⁽⁰⁾` and `D` for one point.
#[derive(Debug, Clone, PartialEq)]
pub struct InfoMatrices {
    pub fim: DMatrix<f64>,
    pub mmfim: DMatrix<f64>,
    pub dmat: DMatrix<f64>,
}

pub fn info_matrices(pmf: &Pmf, n: u32, route: MmfimRoute) -> InfoMatrices {
    InfoMatrices {
        fim: fim(pmf, n),
        mmfim: mmfim(pmf, n, route),
        dmat: DMatrix::from_diagonal(&dmat_for(pmf, n, route)),
    }
}

/// `N·UᵀDU`, after checking that it matches the projection of the full
/// mmFIM to `1e-10` relative to its largest entry.
pub fn projected_mmfim(
    pmf: &Pmf,
    n: u32,
    basis: &NullspaceBasis,
    route: MmfimRoute,
) -> Result<DMatrix<f64>> {
    if basis.m() != pmf.m() {
        return Err(Error::Dimension(format!(
            "basis is for M = {} but pmf has M = {}",
            basis.m(),
            pmf.m()
        )));
    }
    let d = DMatrix::from_diagonal(&dmat_for(pmf, n, route));
    let reduced = basis.project(&d) * n as f64;
    let full = basis.project(&mmfim(pmf, n, route));
    let scale = full.amax().max(reduced.amax()).max(1.0);
    let gap = (&full - &reduced).amax();
    if gap > 1e-10 * scale {
        return Err(Error::Identity(format!(
            "projected mmFIM differs from N·UᵀDU by {gap:.3e} (scale {scale:.3e})"
        )));
    }
    Ok(reduced)
}

/// Everything the bounds need from the information side at one point:
/// `X = U (UᵀJ⁽⁰⁾U)⁻¹ Uᵀ`.
#[derive(Debug, Clone)]
pub struct MmInfo {
    pub n: u32,
    pub route: MmfimRoute,
    pub projected: DMatrix<f64>,
    pub x: DMatrix<f64>,
}

impl MmInfo {
    pub fn new(pmf: &Pmf, n: u32, basis: &NullspaceBasis, route: MmfimRoute) -> Result<Self> {
        Self::with_cap(pmf, n, basis, route, linalg::DEFAULT_CONDITION_CAP)
    }

    pub fn with_cap(
        pmf: &Pmf,
        n: u32,
        basis: &NullspaceBasis,
        route: MmfimRoute,
        cap: f64,
    ) -> Result<Self> {
        let projected = projected_mmfim(pmf, n, basis, route)?;
        Self::from_projected(projected, n, basis, route, cap)
    }

    /// Builds the context from an already projected `UᵀJ⁽⁰⁾U`, for models
    /// other than i.i.d. sampling.
    pub fn from_projected(
        projected: DMatrix<f64>,
        n: u32,
        basis: &NullspaceBasis,
        route: MmfimRoute,
        cap: f64,
    ) -> Result<Self> {
        let inv = linalg::inverse_projected(&projected, cap)?;
        let x = basis.lift(&inv);
        let x = (&x + x.transpose()) * 0.5;
        Ok(Self {
            n,
            route,
            projected,
            x,
        })
    }
}
