use proptest::prelude::*;
use tie_auction::extension::{exact_f, exact_fexp, exact_grad_fexp, sampled_grad_fexp, FractionalPoint};
use tie_auction::generate;
use tie_auction::local_search::singleton_max;
use tie_auction::seed;
use tie_auction::valuation::{exact_lottery_value, sampled_lottery_value};

fn config(cases: u32) -> ProptestConfig {
    ProptestConfig {
        cases,
        failure_persistence: None,
        ..ProptestConfig::default()
    }
}

fn midpoint(x: &FractionalPoint, y: &FractionalPoint) -> FractionalPoint {
    let mut mid = x.clone();
    for i in 0..x.num_bidders() {
        for j in 0..x.num_items() {
            mid.set(i, j, 0.5 * (x.get(i, j) + y.get(i, j)));
        }
    }
    mid
}

proptest! {
    #![proptest_config(config(64))]

    #[test]
    fn fexp_is_midpoint_concave(s in any::<u64>(), n in 1usize..=3, m in 1usize..=3) {
        let mut rng = seed::rng(s);
        let inst = generate::instance(&mut rng, n, m);
        for _ in 0..10 {
            let x = generate::point(&mut rng, n, m);
            let y = generate::point(&mut rng, n, m);
            let lhs = exact_fexp(&inst, &midpoint(&x, &y)).unwrap();
            let rhs = 0.5 * (exact_fexp(&inst, &x).unwrap() + exact_fexp(&inst, &y).unwrap());
            prop_assert!(lhs >= rhs - 1e-9, "{lhs} < {rhs}");
        }
    }

    #[test]
    fn fexp_is_bounded_by_items_times_singleton_max(s in any::<u64>(), n in 1usize..=3, m in 1usize..=4) {
        let mut rng = seed::rng(s);
        let inst = generate::instance(&mut rng, n, m);
        let x = generate::point(&mut rng, n, m);
        let f = exact_fexp(&inst, &x).unwrap();
        prop_assert!(f >= 0.0);
        prop_assert!(f <= m as f64 * singleton_max(&inst) + 1e-12);
        prop_assert!((f - exact_f(&inst, &x.exp_map()).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn gradient_coordinates_are_nonnegative_and_bounded(s in any::<u64>(), n in 1usize..=3, m in 1usize..=3) {
        let mut rng = seed::rng(s);
        let inst = generate::instance(&mut rng, n, m);
        let x = generate::point(&mut rng, n, m);
        let g = exact_grad_fexp(&inst, &x).unwrap();
        let big_m = singleton_max(&inst);
        for (k, &v) in g.g.iter().enumerate() {
            prop_assert!(v >= -1e-12 && v <= big_m + 1e-12, "coordinate {k}: {v}");
        }
    }
}

#[test]
fn gradient_matches_finite_differences() {
    let h = 1e-5;
    let mut rng = seed::rng(21);
    for point in 0..100 {
        let inst = generate::instance_family(21, point, 3, 3);
        let (n, m) = (inst.num_bidders(), inst.num_items());
        let mut x = generate::point(&mut rng, n, m);
        for i in 0..n {
            for j in 0..m {
                x.set(i, j, 0.9 * x.get(i, j) + h);
            }
        }
        let g = exact_grad_fexp(&inst, &x).unwrap();
        for i in 0..n {
            for j in 0..m {
                let (mut lo, mut hi) = (x.clone(), x.clone());
                lo.set(i, j, x.get(i, j) - h);
                hi.set(i, j, x.get(i, j) + h);
                let fd = (exact_fexp(&inst, &hi).unwrap() - exact_fexp(&inst, &lo).unwrap()) / (2.0 * h);
                assert!((fd - g.get(i, j)).abs() <= 1e-6, "point {point} ({i}, {j}): {fd} vs {}", g.get(i, j));
            }
        }
    }
}

#[test]
fn second_differences_are_nonpositive_and_bounded() {
    // F is affine in y_ij with slope at most M, so along x_ij the second derivative
    // is -e^{-x_ij} times that slope: between -M and 0.
    let h = 1e-3;
    let mut rng = seed::rng(5);
    for idx in 0..40 {
        let inst = generate::instance_family(5, idx, 3, 3);
        let (n, m) = (inst.num_bidders(), inst.num_items());
        let big_m = singleton_max(&inst);
        let mut x = generate::point(&mut rng, n, m);
        for i in 0..n {
            for j in 0..m {
                x.set(i, j, 0.9 * x.get(i, j) + h);
            }
        }
        let f0 = exact_fexp(&inst, &x).unwrap();
        for i in 0..n {
            for j in 0..m {
                let (mut lo, mut hi) = (x.clone(), x.clone());
                lo.set(i, j, x.get(i, j) - h);
                hi.set(i, j, x.get(i, j) + h);
                let d2 = (exact_fexp(&inst, &hi).unwrap() - 2.0 * f0 + exact_fexp(&inst, &lo).unwrap()) / (h * h);
                assert!(d2 <= 1e-6, "instance {idx}: {d2}");
                assert!(d2 >= -big_m - 1e-6, "instance {idx}: {d2}");
            }
        }
    }
}

#[test]
fn sampled_lottery_values_converge() {
    let mut within = 0;
    for idx in 0..50 {
        let mut rng = seed::rng(seed::derive(8, "lottery", idx));
        let m = 1 + (idx as usize % 6);
        let v = generate::valuation(&mut rng, m);
        let probs: Vec<f64> = (0..m).map(|_| rand::Rng::random::<f64>(&mut rng)).collect();
        let exact = exact_lottery_value(&v, &probs).unwrap();
        let est = sampled_lottery_value(&v, &probs, 20_000, idx).unwrap();
        if (est.estimate - exact).abs() <= 5.0 * est.stderr + 1e-12 {
            within += 1;
        }
    }
    assert!(within >= 49, "{within} of 50 within 5 standard errors");
}

#[test]
fn sampled_gradient_meets_its_claim() {
    let mut ok = 0;
    for t in 0..30u64 {
        let inst = generate::instance_family(9, t, 2, 3);
        let (n, m) = (inst.num_bidders(), inst.num_items());
        let x = generate::point(&mut seed::rng(t), n, m);
        let big_m = singleton_max(&inst);
        let exact = exact_grad_fexp(&inst, &x).unwrap();
        let est = sampled_grad_fexp(&inst, &x, 0.05, big_m, 0.01, t).unwrap();
        assert_eq!(est.claimed_error, 0.05 * big_m);
        if est.max_abs_deviation(&exact) <= est.claimed_error {
            ok += 1;
        }
    }
    assert!(ok >= 29, "{ok} of 30");
}
