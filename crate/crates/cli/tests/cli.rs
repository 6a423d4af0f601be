use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_missing-mass"));
    c.env_remove("MISSING_MASS_OUT");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn scratch(name: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!("missing-mass-cli-{}-{name}", std::process::id()));
    let _ = fs::remove_dir_all(&d);
    fs::create_dir_all(&d).unwrap();
    d
}

fn field<'a>(out: &'a str, key: &str) -> &'a str {
    out.lines()
        .find_map(|l| l.strip_prefix(key).and_then(|r| r.strip_prefix(": ")))
        .unwrap_or_else(|| panic!("no `{key}` in output:\n{out}"))
}

#[test]
fn bound_uniform_example() {
    let o = run(&["bound", "--pmf", "uniform", "--M", "3", "--N", "1", "--kind", "mmccrb-unbiased"]);
    assert!(o.status.success());
    let out = stdout(&o);
    assert_eq!(field(&out, "approx"), "0.131687");
    let v: f64 = field(&out, "value").parse().unwrap();
    assert!((v - 32.0 / 243.0).abs() < 1e-12);
    assert_eq!(field(&out, "provenance"), "closed_form");
}

#[test]
fn bound_with_estimator_profile_and_dump() {
    let dir = scratch("dump");
    let o = bin()
        .args(["bound", "--pmf", "explicit:0.5,0.3,0.2", "--N", "3", "--kind", "mmccrb", "--estimator", "laplace"])
        .arg("--dump-matrices")
        .arg(&dir)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(field(&stdout(&o), "provenance"), "enumeration");
    for f in ["fim.csv", "mmfim.csv", "dmat.csv", "basis.csv", "projected_mmfim.csv", "x.csv", "bias_profile.csv"] {
        assert!(dir.join(f).exists(), "{f} missing");
    }
    let basis = fs::read_to_string(dir.join("basis.csv")).unwrap();
    assert_eq!(basis.lines().count(), 3);
    assert_eq!(basis.lines().next().unwrap().split(',').count(), 2);
    let _ = fs::remove_dir_all(&dir);
}

#[test]
fn singular_point_is_runtime_error() {
    let o = run(&["bound", "--pmf", "uniform", "--M", "2", "--N", "4", "--kind", "mmccrb-unbiased"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("regularity condition"));
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(run(&["bogus"]).status.code(), Some(1));
    assert_eq!(run(&["bound", "--M", "3"]).status.code(), Some(1));
    assert_eq!(run(&["bound", "--pmf", "zipf:s=x", "--M", "3", "--N", "2"]).status.code(), Some(1));
    assert_eq!(run(&["bound", "--pmf", "uniform", "--M", "3", "--N", "2", "--kind", "crb"]).status.code(), Some(1));
    assert_eq!(run(&["bound", "--pmf", "explicit:0.5,0.6", "--N", "2"]).status.code(), Some(1));
    assert!(run(&["--help"]).status.success());
}

#[test]
fn estimate_from_sample_file() {
    let dir = scratch("estimate");
    let input = dir.join("samples.txt");
    fs::write(&input, "a b a c # comment\nd a\n").unwrap();
    let o = bin()
        .args(["estimate", "--alphabet", "a,b,c,d,e,f", "--input"])
        .arg(&input)
        .output()
        .unwrap();
    assert!(o.status.success());
    let out = stdout(&o);
    // three singletons out of six samples
    assert_eq!(field(&out, "missing_mass_estimate"), "0.5");
    assert!(out.contains("e,0,0.25"));
    assert!(out.contains("a,3,0.25"));

    fs::write(&input, "1 2 2 7\n").unwrap();
    let o = bin().args(["estimate", "--M", "5", "--input"]).arg(&input).output().unwrap();
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains(":1: symbol `7`"));
    let _ = fs::remove_dir_all(&dir);
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let p = dir.join("exp.toml");
    fs::write(&p, body).unwrap();
    p
}

const CONFIG: &str = r#"
name = "tiny"
seed = 3
trials = 300
estimators = ["cml", "good-turing"]
bounds = ["ccrb", "mmccrb-unbiased"]

[pmf]
kind = "zipf"
s = 1.0

[sweep]
over = "N"
values = [5, 10]
fixed = 6
"#;

#[test]
fn simulate_writes_csv_and_plots() {
    let dir = scratch("simulate");
    let cfg = write_config(&dir, CONFIG);
    let out = dir.join("results");
    let o = bin().arg("simulate").arg("--config").arg(&cfg).arg("--out").arg(&out).output().unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(out.join("results.csv")).unwrap();
    assert!(csv.starts_with("name,sweep_var,sweep_value,quantity,series,value,stderr,provenance,error\n"));
    assert_eq!(csv.lines().count(), 1 + 2 * (2 * 2 + 2));
    let svg = fs::read_to_string(out.join("mmmse.svg")).unwrap();
    assert!(svg.starts_with("<svg") || svg.starts_with("<?xml"));
    assert!(out.join("total_bias.svg").exists());

    let o = bin()
        .arg("simulate")
        .arg("--config")
        .arg(&cfg)
        .arg("--no-plots")
        .env("MISSING_MASS_OUT", dir.join("env"))
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(dir.join("env/tiny/results.csv").exists());
    assert!(!dir.join("env/tiny/mmmse.svg").exists());
    let _ = fs::remove_dir_all(&dir);
}

#[test]
fn malformed_config_names_the_field() {
    let dir = scratch("badcfg");
    let cfg = write_config(&dir, &CONFIG.replace("\"good-turing\"", "\"good-tuning\""));
    let o = bin().arg("simulate").arg("--config").arg(&cfg).output().unwrap();
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("estimators[1]"));

    let cfg = write_config(&dir, &CONFIG.replace("trials = 300", "trials = 300\ntrails = 2"));
    let o = bin().arg("simulate").arg("--config").arg(&cfg).output().unwrap();
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("trails") && err.contains("line"), "{err}");
    let _ = fs::remove_dir_all(&dir);
}

#[test]
fn sequential_and_parallel_runs_match() {
    let dir = scratch("modes");
    let cfg = write_config(&dir, CONFIG);
    let mut csvs = Vec::new();
    for (sub, flag) in [("p", None), ("s", Some("--sequential"))] {
        let out = dir.join(sub);
        let mut c = bin();
        c.arg("simulate").arg("--config").arg(&cfg).arg("--no-plots").arg("--out").arg(&out);
        if let Some(f) = flag {
            c.arg(f);
        }
        assert!(c.status().unwrap().success());
        csvs.push(fs::read(out.join("results.csv")).unwrap());
    }
    assert_eq!(csvs[0], csvs[1]);
    let _ = fs::remove_dir_all(&dir);
}

#[test]
fn reproduce_preset_with_overrides() {
    let dir = scratch("reproduce");
    let out = dir.join("fig2");
    let o = bin()
        .args(["reproduce", "fig2", "--trials", "200", "--seed", "5", "--no-plots", "--out"])
        .arg(&out)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(out.join("results.csv")).unwrap();
    assert!(csv.lines().skip(1).all(|l| l.starts_with("fig2,N,")));
    assert!(csv.contains(",monte_carlo,"));
    assert!(csv.contains(",closed_form,"));
    let _ = fs::remove_dir_all(&dir);
}

#[test]
fn oracle_passes() {
    let o = run(&["oracle", "--max-states", "1000000"]);
    assert!(o.status.success());
    let out = stdout(&o);
    assert!(out.contains("0 failed"));
    assert!(!out.contains("[FAIL]"));
}
