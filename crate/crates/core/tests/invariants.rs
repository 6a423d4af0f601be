use approx::assert_relative_eq;
use proptest::prelude::*;

use missing_mass::bounds;
use missing_mass::enumerate;
use missing_mass::information::{self, MmfimRoute};
use missing_mass::{EstimatorSpec, Histogram, NullspaceBasis, Pmf};

fn pmf_strategy(max_m: usize) -> impl Strategy<Value = Pmf> {
    prop::collection::vec(0.05f64..1.0, 2..=max_m).prop_map(|w| {
        let s: f64 = w.iter().sum();
        Pmf::new(w.into_iter().map(|v| v / s).collect()).unwrap()
    })
}

fn counts_strategy() -> impl Strategy<Value = Vec<u32>> {
    prop::collection::vec(0u32..6, 2..10).prop_filter("need a sample", |c| c.iter().any(|&v| v > 0))
}

fn estimators() -> Vec<EstimatorSpec> {
    ["cml", "good-turing", "good-turing:numerator=unseen", "add-constant:c=0.5", "laplace"]
        .iter()
        .map(|s| s.parse().unwrap())
        .collect()
}

proptest! {
    #[test]
    fn natural_estimates_lie_on_simplex(counts in counts_strategy()) {
        let h = Histogram::from_counts(counts).unwrap();
        for est in estimators() {
            let r = est.estimate(&h, 0).unwrap();
            prop_assert!(r.theta_hat.iter().all(|&t| t >= 0.0));
            prop_assert!((r.theta_hat.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            // with nothing unseen the add-constant total is still reported
            if h.count_with(0) > 0 {
                let unseen: f64 = h.unseen().map(|m| r.theta_hat[m]).sum();
                prop_assert!((unseen - r.unseen_total).abs() < 1e-12);
            } else {
                prop_assert!(r.per_element_unseen.is_empty());
            }
            // equal counts get equal estimates
            for i in 0..h.m() {
                for j in 0..h.m() {
                    if h.counts()[i] == h.counts()[j] {
                        prop_assert!((r.theta_hat[i] - r.theta_hat[j]).abs() < 1e-14);
                    }
                }
            }
        }
    }

    #[test]
    fn histogram_weights_sum_to_one(pmf in pmf_strategy(5), n in 1u32..6) {
        let mut total = 0.0;
        let mut states = 0u64;
        enumerate::for_each_histogram(&pmf, n, |c, p| {
            assert_eq!(c.iter().sum::<u32>(), n);
            total += p;
            states += 1;
        });
        prop_assert!((total - 1.0).abs() < 1e-12);
        prop_assert_eq!(states as f64, enumerate::histogram_count(pmf.m(), n));
    }

    #[test]
    fn projected_identity_holds_for_both_routes(pmf in pmf_strategy(8), n in 1u32..30) {
        let u = NullspaceBasis::helmert(pmf.m()).unwrap();
        for route in [MmfimRoute::ClosedForm, MmfimRoute::ExactMoments] {
            prop_assert!(information::projected_mmfim(&pmf, n, &u, route).is_ok());
        }
    }

    #[test]
    fn cml_bound_is_closed_form(pmf in pmf_strategy(7), n in 1u32..40) {
        let u = NullspaceBasis::helmert(pmf.m()).unwrap();
        if let Ok(r) = bounds::mmccrb_cml(&pmf, n, &u, MmfimRoute::ClosedForm) {
            let expect: f64 = pmf.theta().iter().map(|t| t * t * (1.0 - t).powi(n as i32)).sum();
            assert_relative_eq!(r.value, expect, max_relative = 1e-10);
        }
    }

    #[test]
    fn estimator_names_round_trip(c in 0.01f64..5.0, k in 1usize..6) {
        for text in [format!("add-constant:c={c}"), format!("fisher:init=add-constant:c={c},K={k}")] {
            let spec: EstimatorSpec = text.parse().unwrap();
            let again: EstimatorSpec = spec.to_string().parse().unwrap();
            prop_assert_eq!(spec, again);
        }
    }
}

#[test]
fn uniform_increasing_interval_matches_differences() {
    for n in 1..=30u32 {
        let interval = bounds::uniform_bound_increasing_interval(n);
        for m in 3..200usize {
            let up = bounds::mmccrb_uniform_closed_form(m + 1, n).unwrap().value
                > bounds::mmccrb_uniform_closed_form(m, n).unwrap().value;
            let mid = m as f64 + 0.5;
            let predicted = interval.is_some_and(|(lo, hi)| lo < mid && mid < hi);
            assert_eq!(up, predicted, "N={n} M={m}");
        }
    }
}
