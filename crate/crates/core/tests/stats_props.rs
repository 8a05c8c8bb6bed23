use arbscope_core::analytics::{incomplete_beta, ln_gamma, pearson_with_p, student_t_two_sided, Ecdf};
use proptest::prelude::*;
use statrs::distribution::{ContinuousCDF, StudentsT};
use statrs::function::beta::beta_reg;
use statrs::function::gamma::ln_gamma as statrs_ln_gamma;

fn sample() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (3usize..60).prop_flat_map(|n| (prop::collection::vec(-1e3..1e3f64, n), prop::collection::vec(-1e3..1e3f64, n)))
}

proptest! {
    #[test]
    fn pearson_is_symmetric_and_bounded((x, y) in sample()) {
        let (Ok(a), Ok(b)) = (pearson_with_p(&x, &y), pearson_with_p(&y, &x)) else { return Ok(()) };
        prop_assert!((a.r - b.r).abs() < 1e-12);
        prop_assert!((a.p - b.p).abs() < 1e-9);
        prop_assert!((-1.0..=1.0).contains(&a.r));
        prop_assert!((0.0..=1.0).contains(&a.p));
    }

    #[test]
    fn pearson_is_affine_invariant((x, y) in sample(), scale in 0.01..100.0f64, shift in -1e3..1e3f64, flip in any::<bool>()) {
        let Ok(base) = pearson_with_p(&x, &y) else { return Ok(()) };
        let s = if flip { -scale } else { scale };
        let tx: Vec<f64> = x.iter().map(|v| s * v + shift).collect();
        let moved = pearson_with_p(&tx, &y).unwrap();
        let want = if flip { -base.r } else { base.r };
        prop_assert!((moved.r - want).abs() < 1e-9);
        prop_assert!((moved.p - base.p).abs() < 1e-6);
    }

    #[test]
    fn incomplete_beta_matches_reference(a in 0.05..200.0f64, b in 0.05..200.0f64, x in 0.0..1.0f64) {
        let got = incomplete_beta(a, b, x);
        let want = beta_reg(a, b, x);
        prop_assert!((got - want).abs() < 1e-9, "I_{}({}, {}) = {} vs {}", x, a, b, got, want);
    }

    #[test]
    fn ln_gamma_matches_reference(z in 1e-3..1e3f64) {
        let want = statrs_ln_gamma(z);
        prop_assert!((ln_gamma(z) - want).abs() < 1e-10 * want.abs().max(1.0));
    }

    #[test]
    fn t_p_value_matches_reference(t in -20.0..20.0f64, df in 1.0..500.0f64) {
        let dist = StudentsT::new(0.0, 1.0, df).unwrap();
        let want = 2.0 * dist.cdf(-t.abs());
        prop_assert!((student_t_two_sided(t, df) - want).abs() < 1e-9);
    }

    #[test]
    fn ecdf_is_a_distribution(v in prop::collection::vec(-10.0..10.0f64, 1..200)) {
        let e = Ecdf::new(&v);
        prop_assert_eq!(e.n, v.len());
        prop_assert!(e.points.windows(2).all(|w| w[0].0 < w[1].0 && w[0].1 < w[1].1));
        prop_assert_eq!(e.points.last().unwrap().1, 1.0);
        prop_assert!(e.dominates(&e));
        let shifted = Ecdf::new(&v.iter().map(|x| x + 1.0).collect::<Vec<_>>());
        prop_assert!(shifted.dominates(&e));
    }
}
