use dphfl::analysis::{term_b, BoundInputs};
use dphfl::engine::{make_schedule, DpMode, StepSizeSchedule};
use dphfl::privacy::{noise_std, PrivacySpec};
use dphfl::rng::rng_from_u64;
use dphfl::tasks::{estimate_properties, make_quadratic, make_softmax, partition_noniid};
use dphfl::topology::{Topology, TrustPolicy};
use dphfl::ModelVector;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn clipped_gradients_respect_the_bound(seed in 0u64..1000, bound in 0.01f64..5.0, q in 0.1f64..1.0) {
        let topo = Topology::uniform(2, 2, &TrustPolicy::all(true, 2)).unwrap();
        let task = make_quadratic::<f64>(4, &topo, 3.0, 2.0, 8, bound, seed).unwrap();
        let mut rng = rng_from_u64(seed);
        let w = ModelVector::gaussian(4, 5.0, &mut rng);
        for i in 0..topo.num_devices() {
            let g = task.stochastic_gradient(i, &w, q, &mut rng).unwrap();
            prop_assert!(g.norm() <= bound * (1.0 + 1e-12));
        }
    }

    #[test]
    fn noise_scale_is_linear_in_sensitivity(delta_s in 1e-3f64..10.0, k in 1e-2f64..100.0, eps in 0.01f64..1.0) {
        let a = noise_std(1.0, 0.5, delta_s, 20, 1e-5, eps).unwrap();
        let b = noise_std(1.0, 0.5, k * delta_s, 20, 1e-5, eps).unwrap();
        prop_assert!((b - k * a).abs() <= 1e-12 * b.abs().max(1.0));
        let c = noise_std(1.0, 0.5, delta_s, 20, 1e-5, eps / k.sqrt().max(1.0)).unwrap();
        prop_assert!(c >= a * (1.0 - 1e-12));
    }

    #[test]
    fn label_shards_are_disjoint(seed in 0u64..500, labels in 1usize..5, subnets in 1usize..4) {
        let topo = Topology::uniform(subnets, 3, &TrustPolicy::all(false, subnets)).unwrap();
        let data = make_softmax::<f64>(10, 5, 20, 2.0, seed).unwrap();
        let shards = partition_noniid(&data, &topo, labels, seed).unwrap();
        let mut seen = vec![false; data.len()];
        for shard in &shards {
            let mut classes: Vec<usize> = shard.iter().map(|&r| data.label(r)).collect();
            classes.sort_unstable();
            classes.dedup();
            prop_assert_eq!(classes.len(), labels);
            for &r in shard {
                prop_assert!(!seen[r]);
                seen[r] = true;
            }
        }
    }

    #[test]
    fn quadratic_loss_matches_closed_form(seed in 0u64..500) {
        let topo = Topology::uniform(2, 3, &TrustPolicy::all(true, 2)).unwrap();
        let task = make_quadratic::<f64>(3, &topo, 1.0, 0.0, 1, f64::INFINITY, seed).unwrap();
        let mut rng = rng_from_u64(seed + 1);
        let w = ModelVector::gaussian(3, 1.0, &mut rng);
        let centers = task.centers().unwrap();
        let expected: f64 =
            centers.iter().map(|a| 0.5 * w.dist_sq(a)).sum::<f64>() / centers.len() as f64;
        let got = task.evaluate(&w).loss;
        prop_assert!((got - expected).abs() <= 1e-12 * expected.max(1.0));
        let grad = task.global_gradient(&w);
        let mut expected_grad = w.clone();
        expected_grad.axpy(-1.0, task.optimum().unwrap());
        prop_assert!(grad.max_abs_diff(&expected_grad) <= 1e-12);
    }

    #[test]
    fn noise_term_shrinks_with_budget_and_trust(eps in 0.2f64..1.0, trusted in 0usize..4) {
        let topo = Topology::uniform(4, 5, &TrustPolicy::all(false, 4)).unwrap();
        let task = make_quadratic::<f64>(3, &topo, 1.0, 0.5, 10, 1.0, 7).unwrap();
        let props = estimate_properties(&task, &[], 1, 0.5, 7);
        let schedule = make_schedule(20, 20, 5).unwrap();
        let steps = StepSizeSchedule::uncapped(0.05);
        let inputs = |e: f64| {
            let dp = DpMode::On(PrivacySpec::new(e, 1e-5, 0.5, 1.0));
            BoundInputs::from_run(&props, &topo, &schedule, &steps, &dp, 0.5, 3, 1.0)
        };
        let base = inputs(eps);
        prop_assert!(term_b(&inputs(eps * 2.0)) < term_b(&base));
        let mut more_trust = base.clone();
        for c in 0..=trusted {
            more_trust.trust[c] = 1.0;
        }
        prop_assert!(term_b(&more_trust) < term_b(&base));
    }
}
