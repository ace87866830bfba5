use proptest::prelude::*;

use tailforge_core::bounds::{
    calibrate_constant_with, invert_bound, sum_tail_bound, ustat_tail_bound, BoundQuery, CalibrationOptions, Side,
};
use tailforge_core::conjugate::{conjugate, conjugate_at, default_lambda_grid, DEFAULT_NODES};
use tailforge_core::generators::{GeneratorKind, TailGenerator};
use tailforge_core::mgf::MgfSource;
use tailforge_core::simulate::{dkw_epsilon, empirical_tail, run_sum_experiment, SamplerSpec};
use tailforge_core::ustat::{evaluate_ustat, Kernel, UStatSpec};

fn closed_form() -> impl Strategy<Value = TailGenerator> {
    prop_oneof![
        (0.05f64..5.0).prop_map(|a| TailGenerator::quadratic(a).unwrap()),
        (1.1f64..6.0, 0.1f64..3.0).prop_map(|(m, t0)| TailGenerator::regularized_power(m, t0).unwrap()),
        (1.1f64..6.0, 0.1f64..3.0, 0.1f64..4.0).prop_map(|(m, t0, c)| {
            TailGenerator::scaled(TailGenerator::regularized_power(m, t0).unwrap(), c).unwrap()
        }),
    ]
}

fn any_generator() -> impl Strategy<Value = TailGenerator> {
    prop_oneof![
        3 => closed_form(),
        1 => (prop::collection::vec(0.0f64..2.0, 3..30)).prop_map(|incs| {
            // increasing slopes starting at 0 make a convex, superlinear table
            let mut slope = 0.0;
            let mut v = 0.0;
            let mut grid = vec![0.0];
            let mut values = vec![0.0];
            for (i, d) in incs.iter().enumerate() {
                v += slope * 0.5;
                slope += d + 0.01;
                grid.push((i + 1) as f64 * 0.5);
                values.push(v);
            }
            TailGenerator::tabulated(grid, values).unwrap()
        }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn generators_start_at_zero_and_increase(g in any_generator(), mut ts in prop::collection::vec(0.0f64..1.0, 2..40)) {
        prop_assert_eq!(g.evaluate(0.0).unwrap(), 0.0);
        let d = g.domain_max();
        for t in ts.iter_mut() {
            *t *= d;
        }
        ts.sort_by(f64::total_cmp);
        let vs: Vec<f64> = ts.iter().map(|&t| g.evaluate(t).unwrap()).collect();
        prop_assert!(vs.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn regularized_power_is_c1_at_junction(m in 1.1f64..6.0, t0 in 0.1f64..3.0) {
        let g = TailGenerator::regularized_power(m, t0).unwrap();
        let GeneratorKind::RegularizedPower { a, b, .. } = *g.kind() else { unreachable!() };
        // both branch formulas agree at t0
        let left_branch = t0 * t0;
        let right_branch = a * t0.powf(m) + b;
        prop_assert!((left_branch - right_branch).abs() <= 1e-12 * left_branch.max(1.0));
        let h = 1e-7 * t0;
        let at = g.evaluate(t0).unwrap();
        let sl = (at - g.evaluate(t0 - h).unwrap()) / h;
        let sr = (g.evaluate(t0 + h).unwrap() - at) / h;
        prop_assert!((sl - sr).abs() <= 1e-6 * sl.abs(), "{} vs {}", sl, sr);
    }

    #[test]
    fn scaled_is_pointwise_multiple(m in 1.1f64..6.0, t0 in 0.1f64..3.0, c in 0.1f64..10.0, t in 0.0f64..20.0) {
        let inner = TailGenerator::regularized_power(m, t0).unwrap();
        let s = TailGenerator::scaled(inner.clone(), c).unwrap();
        prop_assert_eq!(s.evaluate(t).unwrap(), c * inner.evaluate(t).unwrap());
    }

    #[test]
    fn json_round_trip_is_exact(g in any_generator()) {
        let back = TailGenerator::from_json(&g.to_json()).unwrap();
        prop_assert_eq!(back, g);
    }

    #[test]
    fn inverse_hits_level(g in closed_form(), y in 1e-6f64..200.0) {
        let t = g.inverse(y).unwrap();
        let v = g.evaluate(t).unwrap();
        prop_assert!((v - y).abs() <= 1e-12 * y.max(1.0), "g({}) = {} vs {}", t, v, y);
    }

    #[test]
    fn young_inequality(g in any_generator(), u in 0.0f64..1.0, w in 0.0f64..1.0) {
        let ls = default_lambda_grid(&g, 512).unwrap();
        let table = conjugate(&g, &ls).unwrap();
        let t = u * g.domain_max();
        let l = w * table.max_lambda();
        let lhs = l * t;
        let rhs = g.evaluate(t).unwrap() + table.value_at(l).unwrap() + table.tol_interp();
        prop_assert!(lhs <= rhs, "{} > {}", lhs, rhs);
    }

    #[test]
    fn conjugate_reverses_order(a1 in 0.1f64..3.0, extra in 0.0f64..3.0, m in 2.0f64..5.0) {
        // g1 = a1 t² ≤ g2 = (a1 + extra) t² + regularized power
        let g1 = TailGenerator::quadratic(a1).unwrap();
        let rp = TailGenerator::regularized_power(m, 1.0).unwrap();
        let grid: Vec<f64> = (0..=400).map(|i| i as f64 * 0.02).collect();
        let values: Vec<f64> = grid.iter().map(|&t| (a1 + extra) * t * t + rp.evaluate(t).unwrap()).collect();
        let g2 = TailGenerator::tabulated(grid.clone(), values).unwrap();
        let g1t = TailGenerator::tabulated(grid.clone(), grid.iter().map(|&t| g1.evaluate(t).unwrap()).collect()).unwrap();
        let ls: Vec<f64> = (0..=100).map(|i| i as f64 * 0.14 * a1).collect();
        let t1 = conjugate(&g1t, &ls).unwrap();
        let t2 = conjugate(&g2, &ls).unwrap();
        for (v1, v2) in t1.values().iter().zip(t2.values()) {
            prop_assert!(v1 >= v2);
        }
    }

    #[test]
    fn conjugate_scaling(g in closed_form(), c in 0.2f64..5.0, w in 0.0f64..1.0) {
        // tabulate t ↦ g(t/c) on c·grid and compare its conjugate with g*(cλ)
        let base: Vec<f64> = (0..DEFAULT_NODES).map(|i| g.domain_max() * i as f64 / (DEFAULT_NODES - 1) as f64).collect();
        let grid: Vec<f64> = base.iter().map(|t| c * t).collect();
        let values: Vec<f64> = base.iter().map(|&t| g.evaluate(t).unwrap()).collect();
        let h = TailGenerator::tabulated(grid, values).unwrap();
        let ls = default_lambda_grid(&h, 256).unwrap();
        let table = conjugate(&h, &ls).unwrap();
        let l = w * 0.9 * table.max_lambda();
        let lhs = table.value_at(l).unwrap();
        let rhs = conjugate_at(&g, c * l).unwrap();
        prop_assert!((lhs - rhs).abs() <= table.tol_interp(), "{} vs {} (tol {})", lhs, rhs, table.tol_interp());
    }

    #[test]
    fn bounds_decrease_in_t(g in closed_form(), c in 0.1f64..5.0, n in 1u64..500, mut ts in prop::collection::vec(1e-3f64..50.0, 2..20)) {
        ts.sort_by(f64::total_cmp);
        let q = BoundQuery::sum(g, c, n, Side::Bilateral).unwrap();
        let rs: Vec<_> = ts.iter().map(|&t| sum_tail_bound(&q, t).unwrap()).collect();
        for w in rs.windows(2) {
            prop_assert!(w[1].bound <= w[0].bound);
            prop_assert!(w[1].log_bound_raw <= w[0].log_bound_raw);
        }
        prop_assert!(rs.iter().all(|r| r.bound <= 1.0));
    }

    #[test]
    fn degree_one_ustat_bound_is_sum_bound(g in closed_form(), c in 0.1f64..5.0, n in 1u64..500, t in 1e-3f64..50.0) {
        let q = BoundQuery::sum(g, c, n, Side::Bilateral).unwrap();
        prop_assert_eq!(sum_tail_bound(&q, t).unwrap(), ustat_tail_bound(&q, t).unwrap());
    }

    #[test]
    fn inversion_round_trip(g in closed_form(), c in 0.1f64..5.0, n in 1u64..500, e in -12.0f64..-0.01) {
        let alpha = 10f64.powf(e);
        for side in [Side::Upper, Side::Bilateral] {
            let q = BoundQuery::sum(g.clone(), c, n, side).unwrap();
            let t = invert_bound(&q, alpha).unwrap();
            let b = sum_tail_bound(&q, t).unwrap().bound;
            prop_assert!((b - alpha).abs() <= 1e-9 * alpha);
        }
    }

    #[test]
    fn ustat_is_permutation_invariant(xs in prop::collection::vec(-10.0f64..10.0, 4..12), seed in any::<u64>(), m in 1u32..4) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let spec = UStatSpec::new(Kernel::Product, m).unwrap();
        let mut ys = xs.clone();
        ys.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        let a = evaluate_ustat(&spec, &xs).unwrap().value;
        let b = evaluate_ustat(&spec, &ys).unwrap().value;
        prop_assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn degree_one_ustat_is_the_mean(xs in prop::collection::vec(-1e3f64..1e3, 1..40)) {
        let spec = UStatSpec::new(Kernel::Product, 1).unwrap();
        let u = evaluate_ustat(&spec, &xs).unwrap().value;
        // correctly rounded sum, then one division
        let mut sorted = xs.clone();
        sorted.sort_by(f64::total_cmp);
        let exact = tailforge_core::numeric::exact_sum(sorted.iter().copied()) / xs.len() as f64;
        prop_assert_eq!(u, exact);
        let naive = xs.iter().sum::<f64>() / xs.len() as f64;
        prop_assert!((u - naive).abs() <= 1e-9 * naive.abs().max(1.0));
    }

    #[test]
    fn empirical_tail_is_nonincreasing(xs in prop::collection::vec(-5.0f64..5.0, 1..200), mut ts in prop::collection::vec(0.0f64..6.0, 1..30)) {
        ts.sort_by(f64::total_cmp);
        let e = empirical_tail(&xs, &ts).unwrap();
        prop_assert!(e.windows(2).all(|w| w[1] <= w[0]));
        prop_assert!(e.iter().all(|&p| (0.0..=1.0).contains(&p)));
    }

    #[test]
    fn dkw_matches_formula(n in 1usize..10_000_000, delta in 1e-6f64..0.999) {
        let direct = ((2.0 / delta).ln() / (2.0 * n as f64)).sqrt();
        prop_assert!((dkw_epsilon(n, delta).unwrap() - direct).abs() <= 1e-15);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn calibration_is_monotone_in_range(r1 in 0.5f64..6.0, extra in 0.0f64..6.0, m in 1.5f64..4.0) {
        let g = TailGenerator::regularized_power(m, 1.0).unwrap();
        let opts = CalibrationOptions::default();
        for src in [MgfSource::Rademacher, MgfSource::UniformCentered { a: 1.5 }] {
            let c1 = calibrate_constant_with(&g, &src, r1, &opts).unwrap().constant;
            let c2 = calibrate_constant_with(&g, &src, r1 + extra, &opts).unwrap().constant;
            prop_assert!(c2 >= c1, "{} < {}", c2, c1);
        }
    }
}

#[test]
fn calibrated_constant_is_tight() {
    // returned C satisfies every node; C/(1+tol) fails somewhere
    let g = TailGenerator::regularized_power(3.0, 1.0).unwrap();
    let src = MgfSource::UniformCentered { a: 2.0 };
    let opts = CalibrationOptions::default();
    let cal = calibrate_constant_with(&g, &src, 4.0, &opts).unwrap();
    let nodes: Vec<f64> = (1..=512).map(|j| j as f64 / 128.0).collect();
    let holds = |c: f64| {
        nodes
            .iter()
            .all(|&l| src.log_mgf(l).unwrap() <= conjugate_at(&g, c * l).unwrap())
    };
    assert!(holds(cal.constant));
    assert!(!holds(cal.constant / (1.0 + opts.tol)));
    assert_eq!(cal.lambda_range, 4.0);
}

#[test]
fn reports_are_reproducible() {
    let g = TailGenerator::regularized_power(4.0, 1.0).unwrap();
    let s = SamplerSpec::extremal(g.clone(), 123).unwrap();
    let q = BoundQuery::sum(g, 1.4, 8, Side::Bilateral).unwrap();
    let t = [0.5, 1.0, 1.5, 2.0];
    let a = run_sum_experiment(&s, 8, 10_000, &q, &t, 0.01, &Default::default()).unwrap();
    let b = run_sum_experiment(&s, 8, 10_000, &q, &t, 0.01, &Default::default()).unwrap();
    assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
    let c = run_sum_experiment(&s.with_seed(124), 8, 10_000, &q, &t, 0.01, &Default::default()).unwrap();
    assert_ne!(a.empirical, c.empirical);
}
