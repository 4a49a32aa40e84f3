use injlab::constants::{
    beta_k, gamma_envelopes, gamma_residual, lambert_w_minus1, omega, omega_prime, sigma_p, solve_e0, solve_gamma,
};
use injlab::kac_rice::{landscape_at_north_pole, IntervalSet};
use injlab::output::format_float;
use injlab::stream::Stream;
use injlab::tensor::{estimate_injective_norm, sample_tensor_keyed, AlsOptions, Tensor, DEFAULT_ENTRY_BUDGET};
use injlab::Field;
use num_complex::Complex64;
use proptest::prelude::*;

fn field() -> impl Strategy<Value = Field> {
    prop_oneof![Just(Field::Real), Just(Field::Complex)]
}

proptest! {
    #[test]
    fn sigma_is_even(p in 2u64..60, u in 0.0f64..6.0) {
        let a = sigma_p(p, u).unwrap();
        let b = sigma_p(p, -u).unwrap();
        prop_assert!((a - b).abs() <= 1e-14 * (1.0 + a.abs()));
    }

    #[test]
    fn sigma_is_concave(p in 2u64..60, a in -6.0f64..6.0, b in -6.0f64..6.0) {
        let mid = sigma_p(p, 0.5 * (a + b)).unwrap();
        let chord = 0.5 * (sigma_p(p, a).unwrap() + sigma_p(p, b).unwrap());
        prop_assert!(mid >= chord - 1e-12);
    }

    #[test]
    fn omega_derivative_matches_difference_quotient(u in -6.0f64..6.0) {
        prop_assume!((u.abs() - 2.0).abs() > 1e-3);
        let h = 1e-6;
        let fd = (omega(u + h).unwrap() - omega(u - h).unwrap()) / (2.0 * h);
        prop_assert!((fd - omega_prime(u)).abs() < 1e-6);
    }

    #[test]
    fn e0_is_a_root(p in 2u64..500) {
        let e0 = solve_e0(p).unwrap();
        prop_assert!(sigma_p(p, e0).unwrap().abs() <= 1e-10);
        prop_assert!(sigma_p(p, e0 + 0.01).unwrap() < 0.0);
    }

    #[test]
    fn gamma_is_a_root(p in 3u64..2_000_000, d in 2u64..60, f in field()) {
        let g = solve_gamma(p, d, f).unwrap();
        prop_assert!(gamma_residual(p, beta_k(d, f).unwrap(), g).abs() <= 1e-10);
    }

    #[test]
    fn gamma_envelope_ordering(p in 3u64..2_000_000, d in 2u64..60, f in field()) {
        let (lo, dag, star) = gamma_envelopes(p, d, f).unwrap();
        let g = solve_gamma(p, d, f).unwrap();
        prop_assert!(lo <= g && g <= star, "{lo} {g} {star}");
        if g >= 2.0 {
            prop_assert!(lo <= dag && dag <= g, "{lo} {dag} {g}");
        }
    }

    #[test]
    fn lambert_lower_branch(x in -0.36787944117144233f64..-1e-300) {
        let w = lambert_w_minus1(x).unwrap();
        prop_assert!(w <= -1.0);
        prop_assert!((w * w.exp() - x).abs() <= 1e-14);
    }

    #[test]
    fn csv_floats_round_trip(v in any::<f64>()) {
        prop_assume!(v.is_finite());
        prop_assert_eq!(format_float(v).parse::<f64>().unwrap(), v);
    }

    #[test]
    fn interval_sets_are_sorted(mut cuts in prop::collection::vec(-50.0f64..50.0, 2..10)) {
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        prop_assume!(cuts.len() >= 2);
        let mut ivs: Vec<(f64, f64)> = cuts.chunks_exact(2).map(|c| (c[0], c[1])).collect();
        ivs.reverse();
        let spec: Vec<String> = ivs.iter().map(|(a, b)| format!("{a}:{b}")).collect();
        let set = IntervalSet::parse(&spec.join(",")).unwrap();
        prop_assert!(set.intervals().windows(2).all(|w| w[0].1 < w[1].0));
    }

    #[test]
    fn uniform_is_in_open_unit_interval(seed in any::<u64>(), idx in any::<u64>()) {
        let mut s = Stream::new(seed, "prop", &[idx]);
        for _ in 0..100 {
            let u = s.uniform();
            prop_assert!(u > 0.0 && u < 1.0);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn injective_norm_scales(seed in any::<u64>(), c in 0.1f64..10.0, p in 2usize..4, d in 2usize..5) {
        let t: Tensor<f64> = sample_tensor_keyed(p, d, seed, &[], DEFAULT_ENTRY_BUDGET).unwrap();
        let opts = AlsOptions { restarts: 4, seed, ..Default::default() };
        let a = estimate_injective_norm(&t, &opts).unwrap().value;
        let b = estimate_injective_norm(&t.scaled(c), &opts).unwrap().value;
        prop_assert!((b - c * a).abs() <= 1e-9 * c * a);
    }

    #[test]
    fn complex_norm_ignores_global_phase(seed in any::<u64>(), phi in 0.0f64..std::f64::consts::TAU) {
        let t: Tensor<Complex64> = sample_tensor_keyed(3, 3, seed, &[], DEFAULT_ENTRY_BUDGET).unwrap();
        let opts = AlsOptions { restarts: 8, seed, ..Default::default() };
        let a = estimate_injective_norm(&t, &opts).unwrap().value;
        let b = estimate_injective_norm(&t.scaled(Complex64::from_polar(1.0, phi)), &opts).unwrap().value;
        prop_assert!((a - b).abs() <= 1e-8 * a);
    }

    #[test]
    fn normalized_states_have_norm_at_most_one(seed in any::<u64>(), p in 2usize..5, d in 2usize..5) {
        let t: Tensor<Complex64> = sample_tensor_keyed(p, d, seed, &[], DEFAULT_ENTRY_BUDGET).unwrap();
        let n = t.normalized().unwrap();
        let v = estimate_injective_norm(&n, &AlsOptions { restarts: 4, seed, ..Default::default() }).unwrap().value;
        prop_assert!(v <= 1.0 + 1e-12);
        prop_assert!(v > 0.0);
    }

    #[test]
    fn landscape_hessian_structure(seed in any::<u64>(), p in 2usize..5, d in 2usize..5) {
        let t: Tensor<Complex64> = sample_tensor_keyed(p, d, seed, &[], DEFAULT_ENTRY_BUDGET).unwrap();
        let lp = landscape_at_north_pole(&t);
        prop_assert_eq!(lp.dim(), 2 * p * (d - 1) + 1);
        prop_assert_eq!(&lp.hessian, &lp.hessian.transpose());
        for k in 0..lp.dim() {
            prop_assert_eq!(lp.hessian[(k, k)], -lp.value);
        }
    }
}
