//! mmMSE and total missing-mass bias by exact enumeration or seeded Monte Carlo.

use crate::bias::ExpectationMode;
use crate::enumerate;
use crate::error::{Error, Result};
use crate::estimators::EstimatorSpec;
use crate::fisher::{self, FisherSpec};
use crate::model::{Histogram, Pmf, Sampler};
use crate::sim::{self, tag, Exec, Moments};

#[derive(Debug, Clone, PartialEq)]
pub struct RiskEstimate {
    /// `E[Σ_{m ∈ G_{N,0}} (θ̂_m - θ_m)²]`.
    pub mmmse: f64,
    /// `Σ_m b_m`.
    pub total_bias: f64,
    pub mode: ExpectationMode,
    pub mmmse_se: Option<f64>,
    pub total_bias_se: Option<f64>,
}

impl RiskEstimate {
    fn from_moments(cost: &Moments, bias: &Moments, mode: ExpectationMode) -> Self {
        Self {
            mmmse: cost.mean(),
            total_bias: bias.mean(),
            mode,
            mmmse_se: Some(cost.std_error()),
            total_bias_se: Some(bias.std_error()),
        }
    }
}

/// Squared error and signed error summed over the unseen symbols.
fn unseen_errors(theta: &[f64], theta_hat: &[f64], counts: &[u32]) -> (f64, f64) {
    let mut cost = 0.0;
    let mut bias = 0.0;
    for m in 0..theta.len() {
        if counts[m] == 0 {
            let e = theta_hat[m] - theta[m];
            cost += e * e;
            bias += e;
        }
    }
    (cost, bias)
}

/// Seed handed to an estimator's own Monte Carlo on trial `t`.
pub fn inner_seed(seed: u64, t: usize) -> u64 {
    sim::derive(seed, &[tag::FISHER, t as u64])
}

/// Histogram of trial `t`; shared by every estimator evaluated with `seed`.
pub fn trial_counts(sampler: &Sampler, n: u32, seed: u64, t: usize, counts: &mut Vec<u32>) {
    let mut rng = sim::stream(seed, &[tag::TRIAL, t as u64]);
    sampler.draw_counts(&mut rng, n, counts);
}

/// Risk of an arbitrary estimator given as a function of `(histogram, seed)`.
pub fn evaluate_risk_with<F>(pmf: &Pmf, n: u32, mode: ExpectationMode, exec: Exec, estimator: F) -> Result<RiskEstimate>
where
    F: Fn(&Histogram, u64) -> Result<Vec<f64>> + Sync + Send,
{
    if n == 0 {
        return Err(Error::InvalidArgument("N must be at least 1".into()));
    }
    let theta = pmf.theta();
    match mode {
        ExpectationMode::Enumerate { max_states } => {
            enumerate::check_cutoff(pmf.m(), n, max_states)?;
            let (mut cost, mut bias) = (0.0, 0.0);
            let mut failure = None;
            let mut index = 0u64;
            enumerate::for_each_histogram(pmf, n, |counts, p| {
                index += 1;
                if failure.is_some() || !counts.contains(&0) {
                    return;
                }
                let hist = Histogram::from_counts(counts.to_vec()).expect("n >= 1");
                match estimator(&hist, sim::derive(0, &[tag::FISHER, index])) {
                    Ok(est) => {
                        let (c, b) = unseen_errors(theta, &est, counts);
                        cost += p * c;
                        bias += p * b;
                    }
                    Err(e) => failure = Some(e),
                }
            });
            if let Some(e) = failure {
                return Err(e);
            }
            Ok(RiskEstimate {
                mmmse: cost,
                total_bias: bias,
                mode,
                mmmse_se: None,
                total_bias_se: None,
            })
        }
        ExpectationMode::MonteCarlo { samples, seed } => {
            if samples < 2 {
                return Err(Error::InvalidArgument("Monte Carlo needs at least two trials".into()));
            }
            let sampler = Sampler::new(pmf);
            let acc = sim::fold_trials(
                exec,
                samples,
                || (Moments::default(), Moments::default(), Vec::new(), None),
                |(cost, bias, counts, err): &mut (Moments, Moments, Vec<u32>, Option<Error>), t| {
                    if err.is_some() {
                        return;
                    }
                    trial_counts(&sampler, n, seed, t, counts);
                    let (c, b) = if counts.contains(&0) {
                        let hist = Histogram::from_counts(counts.clone()).expect("n >= 1");
                        match estimator(&hist, inner_seed(seed, t)) {
                            Ok(est) => unseen_errors(theta, &est, counts),
                            Err(e) => {
                                *err = Some(e);
                                return;
                            }
                        }
                    } else {
                        (0.0, 0.0)
                    };
                    cost.push(c);
                    bias.push(b);
                },
                |a, b| {
                    a.0.merge(&b.0);
                    a.1.merge(&b.1);
                    if a.3.is_none() {
                        a.3 = b.3;
                    }
                },
            );
            if let Some(e) = acc.3 {
                return Err(e);
            }
            Ok(RiskEstimate::from_moments(&acc.0, &acc.1, mode))
        }
    }
}

/// Risk of a named estimator.
pub fn evaluate_risk(
    est: &EstimatorSpec,
    pmf: &Pmf,
    n: u32,
    mode: ExpectationMode,
    exec: Exec,
) -> Result<RiskEstimate> {
    if est.is_natural() {
        evaluate_risk_with(pmf, n, mode, exec, |h, _| {
            let (_, per) = est.unseen_assignment(h);
            let mut v = vec![0.0; h.m()];
            if let Some(x) = per {
                for m in h.unseen() {
                    v[m] = x;
                }
            }
            Ok(v)
        })
    } else {
        evaluate_risk_with(pmf, n, mode, exec, |h, s| Ok(est.estimate(h, s)?.theta_hat))
    }
}

/// Two estimators on identical draws.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedComparison {
    pub a: RiskEstimate,
    pub b: RiskEstimate,
    /// Per-trial `cost_A - cost_B`.
    pub deltas: Vec<f64>,
    pub mean_delta: f64,
    pub delta_se: f64,
}

pub fn paired_comparison(
    est_a: &EstimatorSpec,
    est_b: &EstimatorSpec,
    pmf: &Pmf,
    n: u32,
    trials: usize,
    seed: u64,
    exec: Exec,
) -> Result<PairedComparison> {
    if trials < 2 {
        return Err(Error::InvalidArgument("paired comparison needs at least two trials".into()));
    }
    let sampler = Sampler::new(pmf);
    let theta = pmf.theta();
    let per_trial = sim::map_indexed(exec, trials, |t| -> Result<[f64; 4]> {
        let mut counts = Vec::new();
        trial_counts(&sampler, n, seed, t, &mut counts);
        if !counts.contains(&0) {
            return Ok([0.0; 4]);
        }
        let hist = Histogram::from_counts(counts.clone()).expect("n >= 1");
        let inner = inner_seed(seed, t);
        let ea = est_a.estimate(&hist, inner)?.theta_hat;
        let eb = est_b.estimate(&hist, inner)?.theta_hat;
        let (ca, ba) = unseen_errors(theta, &ea, &counts);
        let (cb, bb) = unseen_errors(theta, &eb, &counts);
        Ok([ca, ba, cb, bb])
    });
    let mode = ExpectationMode::MonteCarlo { samples: trials, seed };
    let mut m = [Moments::default(); 5];
    let mut deltas = Vec::with_capacity(trials);
    for r in per_trial {
        let r = r?;
        for i in 0..4 {
            m[i].push(r[i]);
        }
        let d = r[0] - r[2];
        m[4].push(d);
        deltas.push(d);
    }
    Ok(PairedComparison {
        a: RiskEstimate::from_moments(&m[0], &m[1], mode),
        b: RiskEstimate::from_moments(&m[2], &m[3], mode),
        mean_delta: m[4].mean(),
        delta_se: m[4].std_error(),
        deltas,
    })
}

/// Risks of every Fisher-scoring iterate on shared draws.
#[derive(Debug, Clone, PartialEq)]
pub struct FisherRisk {
    /// Index 0 is the init estimator, index `k` the `k`-th iterate.
    pub iterates: Vec<RiskEstimate>,
    /// Paired `cost_k - cost_0` for `k = 1..=K` (index `k - 1`).
    pub delta_vs_init: Vec<Moments>,
    /// Paired `cost_k - cost_{k-1}` for `k = 1..=K` (index `k - 1`).
    pub delta_vs_previous: Vec<Moments>,
    /// Trials in which at least one entry had to be clamped.
    pub repaired_trials: usize,
}

pub fn evaluate_fisher_iterates(
    spec: &FisherSpec,
    pmf: &Pmf,
    n: u32,
    trials: usize,
    seed: u64,
    exec: Exec,
) -> Result<FisherRisk> {
    if trials < 2 {
        return Err(Error::InvalidArgument("Monte Carlo needs at least two trials".into()));
    }
    let k = spec.iterations;
    let sampler = Sampler::new(pmf);
    let theta = pmf.theta();
    let per_trial = sim::map_indexed(exec, trials, |t| -> Result<(Vec<(f64, f64)>, bool)> {
        let mut counts = Vec::new();
        trial_counts(&sampler, n, seed, t, &mut counts);
        if !counts.contains(&0) {
            return Ok((vec![(0.0, 0.0); k + 1], false));
        }
        let hist = Histogram::from_counts(counts.clone()).expect("n >= 1");
        let r = fisher::estimate_fisher_scoring(&hist, spec, inner_seed(seed, t), Exec::Sequential)?;
        let trace = r.trace.expect("fisher scoring records its iterates");
        let repaired = trace.clamped.iter().any(|&c| c > 0);
        Ok((
            trace
                .iterates
                .iter()
                .map(|it| unseen_errors(theta, it, &counts))
                .collect(),
            repaired,
        ))
    });
    let mode = ExpectationMode::MonteCarlo { samples: trials, seed };
    let mut cost = vec![Moments::default(); k + 1];
    let mut bias = vec![Moments::default(); k + 1];
    let mut vs_init = vec![Moments::default(); k];
    let mut vs_prev = vec![Moments::default(); k];
    let mut repaired_trials = 0;
    for r in per_trial {
        let (errs, repaired) = r?;
        repaired_trials += repaired as usize;
        for (i, (c, b)) in errs.iter().enumerate() {
            cost[i].push(*c);
            bias[i].push(*b);
            if i > 0 {
                vs_init[i - 1].push(c - errs[0].0);
                vs_prev[i - 1].push(c - errs[i - 1].0);
            }
        }
    }
    Ok(FisherRisk {
        iterates: cost
            .iter()
            .zip(&bias)
            .map(|(c, b)| RiskEstimate::from_moments(c, b, mode))
            .collect(),
        delta_vs_init: vs_init,
        delta_vs_previous: vs_prev,
        repaired_trials,
    })
}
