//! Iterative Fisher-scoring estimator driven by the mmCCRB equality condition.
//!
//! Each iteration evaluates the init estimator's bias profile at the current
//! iterate by Monte Carlo and moves every unseen symbol by `ψ` times the
//! bound-attaining expression of [`crate::bounds::efficient_error_expression`].

use std::fmt;

use crate::bias;
use crate::bounds;
use crate::error::{Error, Result};
use crate::estimators::{parse_positive, spec_error, split_options, EstimateResult, EstimatorSpec};
use crate::information::{MmInfo, MmfimRoute};
use crate::linalg::NullspaceBasis;
use crate::model::{Histogram, Pmf};
use crate::sim::{self, Exec};

/// Lower clamp applied to every iterate entry.
pub const ITERATE_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepSize {
    /// `ψ = 1/N`.
    InverseN,
    Fixed(f64),
}

impl StepSize {
    pub fn value(self, n: u32) -> f64 {
        match self {
            StepSize::InverseN => 1.0 / n as f64,
            StepSize::Fixed(v) => v,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FisherSpec {
    pub init: Box<EstimatorSpec>,
    pub iterations: usize,
    pub step: StepSize,
    pub mc_samples: usize,
    pub route: MmfimRoute,
}

impl FisherSpec {
    pub fn new(init: EstimatorSpec, iterations: usize) -> Self {
        Self {
            init: Box::new(init),
            iterations,
            step: StepSize::InverseN,
            mc_samples: 2000,
            route: MmfimRoute::ClosedForm,
        }
    }

    pub(crate) fn parse_body(full: &str, body: &str) -> Result<Self> {
        let mut init = None;
        let mut iterations = None;
        let mut step = StepSize::InverseN;
        let mut mc_samples = 2000usize;
        let mut route = MmfimRoute::ClosedForm;
        for (k, v) in split_options(body, &["init", "K", "psi", "mc", "mmfim"]) {
            match k {
                "init" => {
                    let e: EstimatorSpec = v.parse()?;
                    if !e.is_natural() {
                        return Err(spec_error(full, "init must be a closed-form estimator"));
                    }
                    init = Some(e);
                }
                "K" => {
                    let kk: usize = v
                        .parse()
                        .map_err(|_| spec_error(full, format!("K must be an integer, got `{v}`")))?;
                    if kk == 0 {
                        return Err(spec_error(full, "K must be at least 1"));
                    }
                    iterations = Some(kk);
                }
                "psi" => {
                    step = if v == "1/N" {
                        StepSize::InverseN
                    } else {
                        let x: f64 = v
                            .parse()
                            .map_err(|_| spec_error(full, format!("psi must be a number or 1/N, got `{v}`")))?;
                        if !(x >= 0.0) || !x.is_finite() {
                            return Err(spec_error(full, "psi must be non-negative"));
                        }
                        StepSize::Fixed(x)
                    }
                }
                "mc" => {
                    mc_samples = parse_positive(full, k, v)? as usize;
                }
                "mmfim" => route = v.parse()?,
                _ => return Err(spec_error(full, format!("unknown option `{k}`"))),
            }
        }
        Ok(Self {
            init: Box::new(init.ok_or_else(|| spec_error(full, "fisher needs `init=<estimator>`"))?),
            iterations: iterations.ok_or_else(|| spec_error(full, "fisher needs `K=<iterations>`"))?,
            step,
            mc_samples,
            route,
        })
    }
}

impl fmt::Display for FisherSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let psi = match self.step {
            StepSize::InverseN => "1/N".to_string(),
            StepSize::Fixed(v) => v.to_string(),
        };
        write!(
            f,
            "fisher:init={},K={},psi={psi},mc={}",
            self.init, self.iterations, self.mc_samples
        )?;
        if self.route != MmfimRoute::ClosedForm {
            write!(f, ",mmfim={}", self.route)?;
        }
        Ok(())
    }
}

/// Iterates of one Fisher-scoring run; `iterates[0]` is the repaired init estimate.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FisherTrace {
    pub iterates: Vec<Vec<f64>>,
    /// Number of entries clamped to the floor after each iteration (index 0: init).
    pub clamped: Vec<usize>,
}

/// Clamps unseen entries to the floor and rescales the seen block so the
/// vector sums to one. Returns how many entries were clamped.
fn repair(theta: &mut [f64], hist: &Histogram) -> usize {
    let mut clamped = 0;
    let mut unseen_sum = 0.0;
    let mut seen_sum = 0.0;
    let mut seen = 0usize;
    for (t, &c) in theta.iter_mut().zip(hist.counts()) {
        if c == 0 {
            if !(*t >= ITERATE_FLOOR) {
                *t = ITERATE_FLOOR;
                clamped += 1;
            }
            unseen_sum += *t;
        } else {
            seen_sum += *t;
            seen += 1;
        }
    }
    let room = 1.0 - ITERATE_FLOOR * seen as f64;
    if unseen_sum > room {
        let k = room / unseen_sum;
        for (t, &c) in theta.iter_mut().zip(hist.counts()) {
            if c == 0 {
                *t = (*t * k).max(ITERATE_FLOOR);
            }
        }
        unseen_sum = room;
        clamped += 1;
    }
    if seen > 0 {
        let k = (1.0 - unseen_sum) / seen_sum;
        for (t, &c) in theta.iter_mut().zip(hist.counts()) {
            if c > 0 {
                *t *= k;
                if *t < ITERATE_FLOOR {
                    *t = ITERATE_FLOOR;
                    clamped += 1;
                }
            }
        }
    }
    clamped
}

/// One Fisher-scoring update of the unseen entries of `theta`, returning the
/// increment `ψ · expression` per unseen symbol.
pub fn fisher_step(
    spec: &FisherSpec,
    theta: &[f64],
    hist: &Histogram,
    basis: &NullspaceBasis,
    seed: u64,
    exec: Exec,
) -> Result<Vec<(usize, f64)>> {
    let n = hist.n();
    let psi = spec.step.value(n);
    if psi == 0.0 || hist.count_with(0) == 0 {
        return Ok(Vec::new());
    }
    let tilde = Pmf::new(theta.to_vec()).map_err(|e| {
        Error::InvalidArgument(format!("Fisher-scoring iterate is not a valid pmf: {e}"))
    })?;
    let profile = bias::bias_profile_fast(&spec.init, &tilde, n, spec.mc_samples, seed, exec)?;
    let info = MmInfo::new(&tilde, n, basis, spec.route)?;
    let expr = bounds::efficient_error_expression(&profile, &info, &tilde, hist)?;
    Ok(expr.into_iter().map(|(m, v)| (m, psi * v)).collect())
}

/// Runs `spec.iterations` updates from the init estimate.
pub fn estimate_fisher_scoring(
    hist: &Histogram,
    spec: &FisherSpec,
    seed: u64,
    exec: Exec,
) -> Result<EstimateResult> {
    let m = hist.m();
    let basis = NullspaceBasis::helmert(m)?;
    let mut theta = spec.init.estimate(hist, seed)?.theta_hat;
    let mut trace = FisherTrace::default();
    trace.clamped.push(repair(&mut theta, hist));
    trace.iterates.push(theta.clone());
    for k in 1..=spec.iterations {
        let step = fisher_step(spec, &theta, hist, &basis, sim::derive(seed, &[k as u64]), exec)?;
        for (i, d) in step {
            theta[i] += d;
        }
        trace.clamped.push(repair(&mut theta, hist));
        trace.iterates.push(theta.clone());
    }
    let per_element_unseen: Vec<(usize, f64)> = hist.unseen().map(|i| (i, theta[i])).collect();
    Ok(EstimateResult {
        unseen_total: per_element_unseen.iter().map(|(_, v)| v).sum(),
        per_element_unseen,
        theta_hat: theta,
        trace: Some(trace),
    })
}
