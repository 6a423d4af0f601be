use missing_mass::bias::{self, ExpectationMode, Provenance};
use missing_mass::evaluation;
use missing_mass::experiment::{self, ExperimentConfig};
use missing_mass::{EstimatorSpec, Exec, FisherSpec, Pmf};

#[test]
fn monte_carlo_agrees_with_enumeration() {
    let pmf = Pmf::zipf(5, 1.0).unwrap();
    for est in [EstimatorSpec::Cml, EstimatorSpec::good_turing(), EstimatorSpec::laplace()] {
        let exact = evaluation::evaluate_risk(&est, &pmf, 6, ExpectationMode::enumerate(), Exec::Parallel).unwrap();
        let mc = evaluation::evaluate_risk(
            &est,
            &pmf,
            6,
            ExpectationMode::MonteCarlo { samples: 40_000, seed: 11 },
            Exec::Parallel,
        )
        .unwrap();
        assert!(exact.mmmse_se.is_none());
        let se = mc.mmmse_se.unwrap();
        assert!((mc.mmmse - exact.mmmse).abs() < 4.0 * se, "{est}: {} vs {}", mc.mmmse, exact.mmmse);
        let bse = mc.total_bias_se.unwrap();
        assert!((mc.total_bias - exact.total_bias).abs() < 4.0 * bse);
    }
}

#[test]
fn profiles_identical_across_exec_modes() {
    let pmf = Pmf::zipf(6, 1.3).unwrap();
    let est = EstimatorSpec::laplace();
    for mode in [ExpectationMode::enumerate(), ExpectationMode::MonteCarlo { samples: 3000, seed: 5 }] {
        let a = bias::bias_empirical(&est, &pmf, 7, mode, Exec::Sequential).unwrap();
        let b = bias::bias_empirical(&est, &pmf, 7, mode, Exec::Parallel).unwrap();
        assert_eq!(a, b);
    }
    let p = bias::bias_empirical(&est, &pmf, 7, ExpectationMode::MonteCarlo { samples: 3000, seed: 5 }, Exec::Parallel)
        .unwrap();
    assert_eq!(p.provenance, Provenance::MonteCarlo { samples: 3000, seed: 5 });
    assert!(p.b_se.is_some());
}

#[test]
fn enumeration_cutoff_is_reported() {
    let pmf = Pmf::uniform(30).unwrap();
    let err = bias::bias_empirical(
        &EstimatorSpec::laplace(),
        &pmf,
        30,
        ExpectationMode::Enumerate { max_states: 1000 },
        Exec::Sequential,
    )
    .unwrap_err();
    assert!(err.to_string().contains("1000"), "{err}");
}

#[test]
fn fisher_iterates_share_draws() {
    let pmf = Pmf::zipf(6, 1.0).unwrap();
    let spec = FisherSpec {
        mc_samples: 200,
        ..FisherSpec::new(EstimatorSpec::laplace(), 2)
    };
    let a = evaluation::evaluate_fisher_iterates(&spec, &pmf, 8, 64, 9, Exec::Parallel).unwrap();
    let b = evaluation::evaluate_fisher_iterates(&spec, &pmf, 8, 64, 9, Exec::Sequential).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.iterates.len(), 3);
    // the init row is the plain Laplace risk on the same draws
    let lap = evaluation::evaluate_risk(
        &EstimatorSpec::laplace(),
        &pmf,
        8,
        ExpectationMode::MonteCarlo { samples: 64, seed: 9 },
        Exec::Parallel,
    )
    .unwrap();
    assert!((a.iterates[0].mmmse - lap.mmmse).abs() < 1e-15);
    let d = a.iterates[2].mmmse - a.iterates[0].mmmse;
    assert!((a.delta_vs_init[1].mean() - d).abs() < 1e-12);
}

#[test]
fn fig3_preset_runs_small() {
    let mut cfg = ExperimentConfig::preset("fig3").unwrap();
    cfg.trials = 20;
    cfg.sweep.values = vec![20];
    let plan = cfg.validate().unwrap();
    let r = experiment::run_experiment(&plan, Exec::Parallel);
    let csv = r.to_csv_string().unwrap();
    assert!(csv.contains("|k=5"), "{csv}");
    assert!(r.rows.iter().all(|row| row.error.is_none()), "{csv}");
}
