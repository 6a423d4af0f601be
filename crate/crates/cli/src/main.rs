use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use missing_mass::bounds::{self, BoundSettings, BoundSpec, ProfileSource};
use missing_mass::enumerate::DEFAULT_MAX_STATES;
use missing_mass::experiment::{self, ExperimentConfig};
use missing_mass::{fisher, information};
use missing_mass::linalg::write_matrix_csv;
use missing_mass::nalgebra::DMatrix;
use missing_mass::{bias, oracle, Error, EstimatorSpec, Exec, Histogram, MmInfo, MmfimRoute, NullspaceBasis, Pmf};

/// Environment variable naming the root directory for experiment output.
const OUT_ENV: &str = "MISSING_MASS_OUT";

#[derive(Parser)]
#[command(name = "missing-mass", version, about = "Missing-mass estimators and lower bounds")]
struct Cli {
    /// Run trial loops on one thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate one bound at a single (pmf, M, N).
    Bound(BoundArgs),
    /// Estimate the pmf and the missing mass from a sample file.
    Estimate(EstimateArgs),
    /// Run an experiment described by a TOML config.
    Simulate(SimulateArgs),
    /// Run one of the built-in experiment presets.
    Reproduce(ReproduceArgs),
    /// Brute-force cross-checks over small problems.
    Oracle(OracleArgs),
}

#[derive(Args)]
struct BoundArgs {
    /// uniform, zipf:s=<exponent>, explicit:<p1>,<p2>,... or file:<path>
    #[arg(long, default_value = "uniform")]
    pmf: String,
    /// Alphabet size (optional for explicit and file pmfs).
    #[arg(long = "M")]
    m: Option<usize>,
    /// Number of samples.
    #[arg(long = "N")]
    n: u32,
    /// ccrb, mmccrb-unbiased, mmccrb-cml, mmccrb-uniform or mmccrb (needs --estimator).
    #[arg(long, default_value = "mmccrb-unbiased")]
    kind: String,
    /// Estimator whose bias profile enters the bound.
    #[arg(long)]
    estimator: Option<String>,
    /// Monte Carlo draws for the bias profile when enumeration is too large.
    #[arg(long, default_value_t = 10_000)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_MAX_STATES)]
    max_states: u64,
    /// closed-form or exact
    #[arg(long, default_value = "closed-form")]
    mmfim: MmfimRoute,
    /// Write the matrices behind the bound as CSV files into this directory.
    #[arg(long, value_name = "DIR")]
    dump_matrices: Option<PathBuf>,
}

#[derive(Args)]
struct EstimateArgs {
    /// Sample file: whitespace separated symbols, `#` starts a comment.
    #[arg(long)]
    input: PathBuf,
    /// Symbols are the integers 1..=M.
    #[arg(long = "M", conflicts_with = "alphabet")]
    m: Option<usize>,
    /// Comma separated list of symbol names.
    #[arg(long, value_delimiter = ',')]
    alphabet: Option<Vec<String>>,
    #[arg(long, default_value = "good-turing")]
    estimator: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
    /// Output directory (overrides the environment and the config).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    no_plots: bool,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    config: PathBuf,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Fig1,
    Fig2,
    Fig3,
}

#[derive(Args)]
struct ReproduceArgs {
    #[arg(value_enum)]
    preset: Preset,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long, default_value_t = 1_000_000)]
    max_states: u64,
}

/// Errors caused by bad input rather than by the computation.
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<Usage>().is_some() {
        return 1;
    }
    match err.downcast_ref::<Error>() {
        Some(Error::Config(_) | Error::EstimatorSpec { .. } | Error::InvalidArgument(_) | Error::InvalidPmf(_)) => 1,
        _ => 2,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let exec = if cli.sequential { Exec::Sequential } else { Exec::Parallel };
    let result = match cli.command {
        Command::Bound(a) => run_bound(a, exec),
        Command::Estimate(a) => run_estimate(a, exec),
        Command::Simulate(a) => {
            ExperimentConfig::from_file(&a.config).map_err(Into::into).and_then(|c| run_config(c, a.run, exec))
        }
        Command::Reproduce(a) => {
            let name = match a.preset {
                Preset::Fig1 => "fig1",
                Preset::Fig2 => "fig2",
                Preset::Fig3 => "fig3",
            };
            ExperimentConfig::preset(name).map_err(Into::into).and_then(|c| run_config(c, a.run, exec))
        }
        Command::Oracle(a) => run_oracle(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn parse_pmf(spec: &str, m: Option<usize>) -> anyhow::Result<Pmf> {
    let need_m = || m.ok_or_else(|| usage(format!("--M is required for --pmf {spec}")));
    let pmf = if spec == "uniform" {
        Pmf::uniform(need_m()?)?
    } else if let Some(rest) = spec.strip_prefix("zipf") {
        let s = match rest.strip_prefix(":s=") {
            Some(v) => v.parse::<f64>().map_err(|_| usage(format!("bad zipf exponent `{v}`")))?,
            None if rest.is_empty() => 1.0,
            None => bail!(usage(format!("bad pmf `{spec}` (expected zipf:s=<exponent>)"))),
        };
        Pmf::zipf(need_m()?, s)?
    } else if let Some(list) = spec.strip_prefix("explicit:") {
        let theta = list
            .split(',')
            .map(|v| v.trim().parse::<f64>().map_err(|_| usage(format!("bad probability `{v}`"))))
            .collect::<anyhow::Result<Vec<_>>>()?;
        Pmf::new(theta)?
    } else if let Some(path) = spec.strip_prefix("file:") {
        let text = fs::read_to_string(path).with_context(|| format!("cannot read {path}"))?;
        Pmf::parse_text(&text)?
    } else {
        bail!(usage(format!(
            "unknown pmf `{spec}` (expected uniform, zipf:s=.., explicit:.. or file:..)"
        )));
    };
    if let Some(m) = m {
        if pmf.m() != m {
            bail!(usage(format!("pmf has {} entries but --M is {m}", pmf.m())));
        }
    }
    Ok(pmf)
}

fn run_bound(a: BoundArgs, exec: Exec) -> anyhow::Result<()> {
    let pmf = parse_pmf(&a.pmf, a.m)?;
    if a.n == 0 {
        bail!(usage("--N must be at least 1"));
    }
    let spec = match (a.kind.as_str(), &a.estimator) {
        ("mmccrb", Some(e)) => BoundSpec::Estimator(e.parse()?),
        ("mmccrb", None) => bail!(usage("--kind mmccrb needs --estimator")),
        (k, None) => k.parse()?,
        (k, Some(_)) => bail!(usage(format!("--estimator only applies to --kind mmccrb, not {k}"))),
    };
    let basis = NullspaceBasis::helmert(pmf.m())?;
    let settings = BoundSettings {
        route: a.mmfim,
        profile: ProfileSource::Auto {
            max_states: a.max_states,
            samples: a.samples,
            seed: a.seed,
        },
        exec,
    };
    if let Some(dir) = &a.dump_matrices {
        dump_matrices(dir, &pmf, a.n, &basis, &spec, &settings)?;
    }
    let r = bounds::evaluate_bound(&spec, &pmf, a.n, &basis, &settings)?;
    println!("bound: {spec}");
    println!("M: {}", pmf.m());
    println!("N: {}", a.n);
    println!("value: {:?}", r.value);
    println!("approx: {:.6}", r.value);
    println!("trace_term: {:?}", r.trace_term);
    println!("bias_penalty: {:?}", r.bias_penalty);
    println!("provenance: {}", r.provenance.label());
    if let Some(se) = r.standard_error {
        println!("stderr: {se:?}");
    }
    Ok(())
}

fn dump_matrices(
    dir: &Path,
    pmf: &Pmf,
    n: u32,
    basis: &NullspaceBasis,
    spec: &BoundSpec,
    settings: &BoundSettings,
) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    let write = |name: &str, m: &DMatrix<f64>| -> anyhow::Result<()> {
        let path = dir.join(name);
        let f = fs::File::create(&path).with_context(|| format!("cannot write {}", path.display()))?;
        write_matrix_csv(f, m)?;
        Ok(())
    };
    let info = information::info_matrices(pmf, n, settings.route);
    write("fim.csv", &info.fim)?;
    write("mmfim.csv", &info.mmfim)?;
    write("dmat.csv", &info.dmat)?;
    write("basis.csv", basis.matrix())?;
    match MmInfo::new(pmf, n, basis, settings.route) {
        Ok(mm) => {
            write("projected_mmfim.csv", &mm.projected)?;
            write("x.csv", &mm.x)?;
        }
        Err(e) => log::warn!("projected mmFIM not invertible, skipping x.csv: {e}"),
    }
    if let BoundSpec::Estimator(est) = spec {
        let mode = settings.profile.mode(pmf.m(), n);
        let profile = bias::bias_empirical(est, pmf, n, mode, settings.exec)?;
        let f = fs::File::create(dir.join("bias_profile.csv"))?;
        profile.write_csv(f)?;
    }
    Ok(())
}

fn run_estimate(a: EstimateArgs, exec: Exec) -> anyhow::Result<()> {
    let text = fs::read_to_string(&a.input).with_context(|| format!("cannot read {}", a.input.display()))?;
    let names: Vec<String> = match (&a.alphabet, a.m) {
        (Some(names), _) => names.iter().map(|s| s.trim().to_string()).collect(),
        (None, Some(m)) => (1..=m).map(|i| i.to_string()).collect(),
        (None, None) => bail!(usage("give the alphabet with --M or --alphabet")),
    };
    if names.len() < 2 {
        bail!(usage("the alphabet needs at least two symbols"));
    }
    let index: HashMap<&str, usize> = names.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    if index.len() != names.len() {
        bail!(usage("duplicate symbol in --alphabet"));
    }
    let mut x = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("");
        for tok in line.split_whitespace() {
            let i = index
                .get(tok)
                .ok_or_else(|| usage(format!("{}:{}: symbol `{tok}` is not in the alphabet", a.input.display(), lineno + 1)))?;
            x.push(*i);
        }
    }
    if x.is_empty() {
        bail!(usage(format!("{}: no samples", a.input.display())));
    }
    let hist = Histogram::from_symbols(names.len(), &x)?;
    let spec: EstimatorSpec = a.estimator.parse()?;
    let r = match &spec {
        EstimatorSpec::Fisher(f) => fisher::estimate_fisher_scoring(&hist, f, a.seed, exec)?,
        other => other.estimate(&hist, a.seed)?,
    };
    println!("estimator: {spec}");
    println!("N: {}", hist.n());
    println!("M: {}", hist.m());
    println!("missing_mass_estimate: {:?}", r.unseen_total);
    println!("symbol,count,estimate");
    for (i, name) in names.iter().enumerate() {
        println!("{name},{},{:?}", hist.counts()[i], r.theta_hat[i]);
    }
    if let Some(t) = &r.trace {
        log::info!("fisher scoring: {} iterates, clamped at steps {:?}", t.iterates.len(), t.clamped);
    }
    Ok(())
}

fn output_dir(run: &RunArgs, config: &ExperimentConfig) -> PathBuf {
    if let Some(dir) = &run.out {
        return dir.clone();
    }
    if let Some(root) = std::env::var_os(OUT_ENV).filter(|v| !v.is_empty()) {
        return PathBuf::from(root).join(&config.name);
    }
    config
        .output
        .dir
        .clone()
        .unwrap_or_else(|| Path::new("out").join(&config.name))
}

fn run_config(mut config: ExperimentConfig, run: RunArgs, exec: Exec) -> anyhow::Result<()> {
    if let Some(seed) = run.seed {
        config.seed = seed;
    }
    if let Some(trials) = run.trials {
        config.trials = trials;
    }
    let dir = output_dir(&run, &config);
    let plots = config.output.plots && !run.no_plots;
    let plan = config.validate()?;
    let result = experiment::run_experiment(&plan, exec);
    let failed = result.rows.iter().filter(|r| r.error.is_some()).count();
    if failed > 0 {
        log::warn!("{failed} rows could not be computed and are recorded as NA");
    }
    let written = experiment::write_outputs(&result, &dir, plots)?;
    for p in written {
        println!("{}", p.display());
    }
    Ok(())
}

fn run_oracle(a: OracleArgs) -> anyhow::Result<()> {
    let report = oracle::run_oracle(a.max_states);
    println!("{report}");
    if report.passed() {
        Ok(())
    } else {
        Err(anyhow!("oracle checks failed"))
    }
}
