//! Declarative sweeps over `M` or `N`, their CSV output and plots.
//!
//! A config is a TOML file:
//!
//! ```toml
//! name = "fig2"
//! seed = 42
//! trials = 10000
//! estimators = ["cml", "good-turing", "add-constant:c=1"]
//! bounds = ["ccrb", "mmccrb-unbiased", "mmccrb:add-constant:c=1"]
//!
//! [pmf]
//! kind = "zipf"      # uniform | zipf | explicit
//! s = 1.0
//!
//! [sweep]
//! over = "N"         # or "M"
//! values = [20, 40, 80]
//! fixed = 15         # the value of the variable not swept
//! ```

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::bias::ExpectationMode;
use crate::bounds::{self, BoundSettings, BoundSpec, ProfileSource};
use crate::enumerate::DEFAULT_MAX_STATES;
use crate::error::{Error, Result};
use crate::estimators::EstimatorSpec;
use crate::evaluation;
use crate::information::MmfimRoute;
use crate::linalg::NullspaceBasis;
use crate::model::{make_pmf, PmfKind};
use crate::plot;
use crate::sim::{self, tag, Exec};

pub const CSV_HEADER: [&str; 9] = [
    "name",
    "sweep_var",
    "sweep_value",
    "quantity",
    "series",
    "value",
    "stderr",
    "provenance",
    "error",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
pub enum SweepVar {
    M,
    N,
}

impl fmt::Display for SweepVar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepVar::M => "M",
            SweepVar::N => "N",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub over: SweepVar,
    pub values: Vec<u32>,
    pub fixed: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum RiskMethod {
    /// Monte Carlo with `trials` draws (the default).
    #[default]
    Mc,
    /// Exact enumeration where `M^N` allows it, Monte Carlo otherwise.
    Auto,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: Option<PathBuf>,
    #[serde(default = "yes")]
    pub plots: bool,
}

fn yes() -> bool {
    true
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: None, plots: true }
    }
}

/// Raw config as read from TOML. Estimator and bound names are parsed by
/// [`ExperimentConfig::validate`].
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub seed: u64,
    #[serde(default = "default_trials")]
    pub trials: usize,
    /// Draws used for Monte Carlo bias profiles; defaults to `trials`.
    pub profile_samples: Option<usize>,
    #[serde(default = "default_max_states")]
    pub max_states: u64,
    #[serde(default)]
    pub risk: RiskMethod,
    #[serde(default = "default_route")]
    pub mmfim: String,
    pub pmf: PmfKind,
    pub sweep: Sweep,
    #[serde(default)]
    pub estimators: Vec<String>,
    #[serde(default)]
    pub bounds: Vec<String>,
    #[serde(default)]
    pub output: OutputConfig,
}

fn default_trials() -> usize {
    10_000
}

fn default_max_states() -> u64 {
    DEFAULT_MAX_STATES
}

fn default_route() -> String {
    "closed-form".into()
}

/// A config whose names have been parsed.
#[derive(Debug, Clone)]
pub struct Plan {
    pub config: ExperimentConfig,
    pub estimators: Vec<EstimatorSpec>,
    pub bounds: Vec<BoundSpec>,
    pub route: MmfimRoute,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// Built-in configs `fig1`, `fig2`, `fig3`.
    pub fn preset(name: &str) -> Result<Self> {
        let text = match name {
            "fig1" => include_str!("../presets/fig1.toml"),
            "fig2" => include_str!("../presets/fig2.toml"),
            "fig3" => include_str!("../presets/fig3.toml"),
            _ => {
                return Err(Error::Config(format!(
                    "unknown preset `{name}` (expected fig1, fig2 or fig3)"
                )))
            }
        };
        Self::from_toml(text)
    }

    pub fn validate(self) -> Result<Plan> {
        let field = |f: &str, msg: String| Error::Config(format!("field `{f}`: {msg}"));
        if self.sweep.values.is_empty() {
            return Err(field("sweep.values", "must not be empty".into()));
        }
        if self.estimators.is_empty() && self.bounds.is_empty() {
            return Err(field("estimators", "need at least one estimator or bound".into()));
        }
        if self.trials < 2 {
            return Err(field("trials", "must be at least 2".into()));
        }
        if self.profile_samples == Some(0) {
            return Err(field("profile_samples", "must be positive".into()));
        }
        let (ms, ns): (Vec<u32>, Vec<u32>) = match self.sweep.over {
            SweepVar::M => (self.sweep.values.clone(), vec![self.sweep.fixed]),
            SweepVar::N => (vec![self.sweep.fixed], self.sweep.values.clone()),
        };
        if let Some(m) = ms.iter().find(|&&m| m < 2) {
            return Err(field("sweep", format!("M must be at least 2, got {m}")));
        }
        if ns.contains(&0) {
            return Err(field("sweep", "N must be at least 1".into()));
        }
        if let PmfKind::Explicit { values } = &self.pmf {
            if ms.iter().any(|&m| m as usize != values.len()) {
                return Err(field(
                    "pmf.values",
                    format!("explicit pmf has {} entries but the sweep uses other M", values.len()),
                ));
            }
        }
        let estimators = self
            .estimators
            .iter()
            .enumerate()
            .map(|(i, s)| s.parse().map_err(|e| field(&format!("estimators[{i}]"), format!("{e}"))))
            .collect::<Result<Vec<EstimatorSpec>>>()?;
        let bounds = self
            .bounds
            .iter()
            .enumerate()
            .map(|(i, s)| s.parse().map_err(|e| field(&format!("bounds[{i}]"), format!("{e}"))))
            .collect::<Result<Vec<BoundSpec>>>()?;
        let route = self.mmfim.parse().map_err(|e| field("mmfim", format!("{e}")))?;
        Ok(Plan {
            config: self,
            estimators,
            bounds,
            route,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quantity {
    Mmmse,
    TotalBias,
    BoundValue,
}

impl Quantity {
    pub fn label(self) -> &'static str {
        match self {
            Quantity::Mmmse => "mmmse",
            Quantity::TotalBias => "total_bias",
            Quantity::BoundValue => "bound_value",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub sweep_value: u32,
    pub quantity: Quantity,
    pub series: String,
    pub value: Option<f64>,
    pub stderr: Option<f64>,
    pub provenance: &'static str,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub name: String,
    pub sweep_var: SweepVar,
    pub rows: Vec<Row>,
}

fn fmt_opt(v: Option<f64>) -> String {
    match v {
        Some(x) if x.is_finite() => format!("{x:?}"),
        _ => "NA".into(),
    }
}

impl RunResult {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(CSV_HEADER)?;
        for r in &self.rows {
            out.write_record([
                self.name.as_str(),
                &self.sweep_var.to_string(),
                &r.sweep_value.to_string(),
                r.quantity.label(),
                &r.series,
                &fmt_opt(r.value),
                &fmt_opt(r.stderr),
                r.provenance,
                r.error.as_deref().unwrap_or(""),
            ])?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }

    /// Rows of one quantity and series, in sweep order.
    pub fn series(&self, quantity: Quantity, series: &str) -> Vec<&Row> {
        self.rows
            .iter()
            .filter(|r| r.quantity == quantity && r.series == series)
            .collect()
    }
}

fn mode_label(mode: ExpectationMode) -> &'static str {
    match mode {
        ExpectationMode::Enumerate { .. } => "enumeration",
        ExpectationMode::MonteCarlo { .. } => "monte_carlo",
    }
}

/// Series name of Fisher-scoring iterate `k`.
pub fn iterate_series(spec: &EstimatorSpec, k: usize) -> String {
    format!("{spec}|k={k}")
}

fn run_point(plan: &Plan, value: u32, exec: Exec) -> Vec<Row> {
    let cfg = &plan.config;
    let (m, n) = match cfg.sweep.over {
        SweepVar::M => (value as usize, cfg.sweep.fixed),
        SweepVar::N => (cfg.sweep.fixed as usize, value),
    };
    let mut rows = Vec::new();
    let na = |quantity, series: String, provenance, e: &Error| Row {
        sweep_value: value,
        quantity,
        series,
        value: None,
        stderr: None,
        provenance,
        error: Some(e.to_string()),
    };
    let pmf = match make_pmf(&cfg.pmf, m) {
        Ok(p) => p,
        Err(e) => {
            for est in &plan.estimators {
                rows.push(na(Quantity::Mmmse, est.to_string(), "NA", &e));
            }
            for b in &plan.bounds {
                rows.push(na(Quantity::BoundValue, b.to_string(), "NA", &e));
            }
            return rows;
        }
    };
    let point_seed = sim::derive(cfg.seed, &[tag::SWEEP, m as u64, n as u64]);
    let risk_mode = match cfg.risk {
        RiskMethod::Auto if crate::enumerate::check_cutoff(m, n, cfg.max_states).is_ok() => {
            ExpectationMode::Enumerate {
                max_states: cfg.max_states,
            }
        }
        _ => ExpectationMode::MonteCarlo {
            samples: cfg.trials,
            seed: point_seed,
        },
    };
    let risk_rows = |rows: &mut Vec<Row>, series: String, r: &evaluation::RiskEstimate| {
        let prov = mode_label(r.mode);
        rows.push(Row {
            sweep_value: value,
            quantity: Quantity::Mmmse,
            series: series.clone(),
            value: Some(r.mmmse),
            stderr: r.mmmse_se,
            provenance: prov,
            error: None,
        });
        rows.push(Row {
            sweep_value: value,
            quantity: Quantity::TotalBias,
            series,
            value: Some(r.total_bias),
            stderr: r.total_bias_se,
            provenance: prov,
            error: None,
        });
    };
    for est in &plan.estimators {
        match est {
            EstimatorSpec::Fisher(spec) => {
                match evaluation::evaluate_fisher_iterates(spec, &pmf, n, cfg.trials, point_seed, exec) {
                    Ok(fr) => {
                        for (k, r) in fr.iterates.iter().enumerate().skip(1) {
                            risk_rows(&mut rows, iterate_series(est, k), r);
                        }
                    }
                    Err(e) => {
                        for k in 1..=spec.iterations {
                            rows.push(na(Quantity::Mmmse, iterate_series(est, k), "monte_carlo", &e));
                            rows.push(na(Quantity::TotalBias, iterate_series(est, k), "monte_carlo", &e));
                        }
                    }
                }
            }
            _ => match evaluation::evaluate_risk(est, &pmf, n, risk_mode, exec) {
                Ok(r) => risk_rows(&mut rows, est.to_string(), &r),
                Err(e) => {
                    rows.push(na(Quantity::Mmmse, est.to_string(), mode_label(risk_mode), &e));
                    rows.push(na(Quantity::TotalBias, est.to_string(), mode_label(risk_mode), &e));
                }
            },
        }
    }
    let settings = BoundSettings {
        route: plan.route,
        profile: ProfileSource::Auto {
            max_states: cfg.max_states,
            samples: cfg.profile_samples.unwrap_or(cfg.trials),
            seed: sim::derive(point_seed, &[tag::PROFILE]),
        },
        exec,
    };
    let basis = NullspaceBasis::helmert(m);
    for b in &plan.bounds {
        let result = basis
            .as_ref()
            .map_err(|e| Error::InvalidArgument(e.to_string()))
            .and_then(|u| bounds::evaluate_bound(b, &pmf, n, u, &settings));
        match result {
            Ok(r) => rows.push(Row {
                sweep_value: value,
                quantity: Quantity::BoundValue,
                series: b.to_string(),
                value: Some(r.value),
                stderr: r.standard_error,
                provenance: r.provenance.label(),
                error: None,
            }),
            Err(e) => rows.push(na(Quantity::BoundValue, b.to_string(), "closed_form", &e)),
        }
    }
    rows
}

/// Runs every sweep point. Points run independently; output is in sweep order.
pub fn run_experiment(plan: &Plan, exec: Exec) -> RunResult {
    let values = &plan.config.sweep.values;
    let per_point = sim::map_indexed(exec, values.len(), |i| run_point(plan, values[i], exec));
    RunResult {
        name: plan.config.name.clone(),
        sweep_var: plan.config.sweep.over,
        rows: per_point.into_iter().flatten().collect(),
    }
}

/// Writes `results.csv` and, if enabled, one SVG per plotted quantity into
/// `dir`. Returns the written paths.
pub fn write_outputs(result: &RunResult, dir: &Path, plots: bool) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let csv_path = dir.join("results.csv");
    fs::write(&csv_path, result.to_csv_string()?)?;
    let mut written = vec![csv_path];
    if plots {
        for (file, svg) in plot::emit_plots(result) {
            let p = dir.join(file);
            fs::write(&p, svg)?;
            written.push(p);
        }
    }
    Ok(written)
}
