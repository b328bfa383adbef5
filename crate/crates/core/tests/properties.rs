use dadp_core::dyncore::io::{dataset_from_bytes, dataset_to_bytes};
use dadp_core::dyncore::{generate_dataset, grid_domains, EnvId, Lag};
use dadp_core::encoder::build_pairs;
use dadp_core::mixdiff::policy::clip_estimate;
use dadp_core::mixdiff::window::{perturb_with, target_with};
use dadp_core::mixdiff::{broadcast_z, composite_target, ddim_step, forward_perturb, NoiseSchedule, WindowSpec};
use dadp_core::nn::loss::masked_mse;
use dadp_core::standardize::Standardizer;
use ndarray::Array2;
use proptest::prelude::*;

const SPEC: WindowSpec = WindowSpec {
    history: 16,
    future: 4,
    obs_dim: 1,
    action_dim: 1,
};

fn window() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-3.0f64..3.0, SPEC.history * 2 + SPEC.future * 2)
}

fn z() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-2.0f64..2.0, 2)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn perturbation_is_signal_plus_target(x0 in window(), eps in window(), z in z(), k in 0.0f64..1.0, lambda in 0.0f64..2.0) {
        let sch = NoiseSchedule::default();
        let mask = SPEC.mask();
        let bz = broadcast_z(&z, SPEC.rows(), &mask).unwrap();
        let xk = forward_perturb(&sch, &x0, &bz, &eps, &mask, k, lambda);
        let t = composite_target(&sch, &bz, &eps, &mask, k, lambda);
        let a = sch.alpha(k);
        for i in 0..xk.len() {
            if mask[i] == 0.0 {
                prop_assert!((xk[i] - (a * x0[i] + t[i])).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn masked_entries_are_fixed_points(x0 in window(), eps in window(), z in z(), k in 0.01f64..1.0, frac in 0.0f64..1.0, lambda in 0.0f64..2.0) {
        let sch = NoiseSchedule::default();
        let mask = SPEC.mask();
        let bz = broadcast_z(&z, SPEC.rows(), &mask).unwrap();
        let xk = forward_perturb(&sch, &x0, &bz, &eps, &mask, k, lambda);
        let stepped = ddim_step(&sch, &xk, &eps, &mask, k, k * frac);
        for i in 0..x0.len() {
            if mask[i] == 1.0 {
                prop_assert_eq!(xk[i], x0[i]);
                prop_assert_eq!(stepped[i], x0[i]);
            }
        }
    }

    #[test]
    fn zero_guidance_reduces_to_standard_process(x0 in window(), eps in window(), z in z(), k in 0.0f64..1.0) {
        let sch = NoiseSchedule::default();
        let mask = SPEC.mask();
        let bz = broadcast_z(&z, SPEC.rows(), &mask).unwrap();
        let (a, s) = (sch.alpha(k), sch.sigma(k));
        let biased = perturb_with(&x0, &bz, &eps, &mask, a, s, 0.0);
        let target = target_with(&bz, &eps, &mask, a, s, 0.0);
        for i in 0..x0.len() {
            if mask[i] == 0.0 {
                prop_assert_eq!(biased[i].to_bits(), (a * x0[i] + s * eps[i]).to_bits());
                prop_assert_eq!(target[i].to_bits(), (s * eps[i]).to_bits());
            }
        }
    }

    #[test]
    fn oracle_ddim_is_consistent(x0 in window(), eps in window(), k in 0.01f64..1.0, frac in 0.0f64..1.0) {
        let sch = NoiseSchedule::default();
        let mask = SPEC.mask();
        let zero = vec![0.0; x0.len()];
        let k_prev = k * frac;
        let xk = forward_perturb(&sch, &x0, &zero, &eps, &mask, k, 0.0);
        let oracle = composite_target(&sch, &zero, &eps, &mask, k, 0.0);
        let stepped = ddim_step(&sch, &xk, &oracle, &mask, k, k_prev);
        let expected = forward_perturb(&sch, &x0, &zero, &eps, &mask, k_prev, 0.0);
        for i in 0..x0.len() {
            prop_assert!((stepped[i] - expected[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn schedule_stays_on_unit_circle(k in 0.0f64..0.999) {
        let a = NoiseSchedule::raw_alpha(k);
        let s = NoiseSchedule::raw_sigma(k);
        prop_assert!((a * a + s * s - 1.0).abs() < 1e-12);
        let sch = NoiseSchedule::default();
        prop_assert!(sch.alpha(k) >= sch.floor || k == 0.0);
    }

    #[test]
    fn masked_loss_has_zero_gradient_on_masked_entries(pred in window(), target in window()) {
        let mask = SPEC.mask();
        let l = mask.len();
        let weight: Vec<f64> = mask.iter().map(|m| 1.0 - m).collect();
        let p = Array2::from_shape_vec((1, l), pred).unwrap();
        let t = Array2::from_shape_vec((1, l), target).unwrap();
        let w = Array2::from_shape_vec((1, l), weight).unwrap();
        let (_, g) = masked_mse(p.view(), t.view(), w.view()).unwrap();
        for i in 0..l {
            if mask[i] == 1.0 {
                prop_assert_eq!(g[[0, i]], 0.0);
            }
        }
    }

    #[test]
    fn clipped_estimate_bounds_clean_value(x in window(), eps in window(), alpha in 0.001f64..1.0, bound in 0.5f64..5.0) {
        let mask = SPEC.mask();
        let mut e = eps.clone();
        clip_estimate(&mut e, &x, &mask, alpha, bound);
        for i in 0..x.len() {
            if mask[i] == 1.0 {
                prop_assert_eq!(e[i], eps[i]);
            } else {
                let x0 = (x[i] - e[i]) / alpha;
                prop_assert!(x0.abs() <= bound * (1.0 + 1e-9));
                if ((x[i] - eps[i]) / alpha).abs() <= bound {
                    prop_assert_eq!(e[i], eps[i]);
                }
            }
        }
    }

    #[test]
    fn standardizer_round_trip(rows in prop::collection::vec(prop::collection::vec(-100.0f64..100.0, 3), 2..20)) {
        let s = Standardizer::fit(3, rows.iter().map(|r| r.as_slice()));
        for r in &rows {
            let back = s.invert(&s.apply(r));
            for (a, b) in back.iter().zip(r) {
                prop_assert!((a - b).abs() < 1e-9 * (1.0 + b.abs()));
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn infinite_lag_never_pairs_an_episode_with_itself(seed in any::<u64>(), episodes in 2usize..5) {
        let ds = generate_dataset(EnvId::Push1D, &grid_domains(EnvId::Push1D, 2), episodes, 24, seed).unwrap();
        let pairs = build_pairs(&ds, Lag::Infinite, 16, seed ^ 1).unwrap();
        prop_assert!(!pairs.is_empty());
        for p in &pairs {
            prop_assert!(p.context_episode != p.target_episode);
        }
    }

    #[test]
    fn finite_lag_context_ends_exactly_lag_steps_before(seed in any::<u64>(), lag in 1usize..8) {
        let ds = generate_dataset(EnvId::Push1D, &grid_domains(EnvId::Push1D, 2), 2, 32, seed).unwrap();
        for p in build_pairs(&ds, Lag::Steps(lag), 16, seed).unwrap() {
            prop_assert_eq!(p.context_episode, p.target_episode);
            prop_assert_eq!(p.context_end + lag, p.t);
        }
    }

    #[test]
    fn dataset_bytes_are_deterministic(seed in any::<u64>()) {
        let grid = grid_domains(EnvId::BallDrop, 2);
        let a = dataset_to_bytes(&generate_dataset(EnvId::BallDrop, &grid, 2, 24, seed).unwrap());
        let b = dataset_to_bytes(&generate_dataset(EnvId::BallDrop, &grid, 2, 24, seed).unwrap());
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(dataset_to_bytes(&dataset_from_bytes(&a).unwrap()), a);
    }
}
