use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sirds_core::stats::{student_t_cdf, student_t_sf, t_test_one_tailed, Tail, VarianceModel};
use statrs::distribution::{ContinuousCDF, StudentsT};

fn oracle_p(t: f64, df: f64) -> f64 {
    StudentsT::new(0.0, 1.0, df).unwrap().sf(t)
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9
}

#[test]
fn agrees_with_statrs_on_random_samples() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for case in 0..100 {
        let na = rng.random_range(3..40);
        let nb = rng.random_range(3..40);
        let shift = rng.random_range(-1.5..1.5);
        let spread = rng.random_range(0.2..3.0);
        let a: Vec<f64> = (0..na)
            .map(|_| rng.random_range(0.0..1.0) * spread + shift)
            .collect();
        let b: Vec<f64> = (0..nb).map(|_| rng.random_range(0.0..1.0)).collect();
        for model in [VarianceModel::Welch, VarianceModel::Pooled] {
            for tail in [Tail::AGreater, Tail::ALess] {
                let r = t_test_one_tailed(&a, &b, tail, model).unwrap();
                let directed = if tail == Tail::AGreater { r.t } else { -r.t };
                let expected = oracle_p(directed, r.df);
                assert!(
                    close(r.p, expected),
                    "case {case} {model:?} {tail:?}: {} vs {expected}",
                    r.p
                );
            }
        }
    }
}

#[test]
fn zero_t_gives_half() {
    let a = [1.0, 2.0, 3.0];
    let b = [3.0, 2.0, 1.0];
    for model in [VarianceModel::Welch, VarianceModel::Pooled] {
        let r = t_test_one_tailed(&a, &b, Tail::AGreater, model).unwrap();
        assert_eq!(r.t, 0.0);
        assert_eq!(r.p, 0.5);
        assert!(!r.significant);
    }
}

#[test]
fn identical_constant_samples_are_degenerate() {
    assert!(t_test_one_tailed(
        &[1.0, 1.0],
        &[1.0, 1.0],
        Tail::AGreater,
        VarianceModel::Welch
    )
    .is_err());
    assert!(t_test_one_tailed(&[1.0], &[1.0, 2.0], Tail::AGreater, VarianceModel::Welch).is_err());
}

proptest! {
    #[test]
    fn survival_matches_oracle(t in -40.0f64..40.0, df in 1.0f64..500.0) {
        prop_assert!(close(student_t_sf(t, df), oracle_p(t, df)));
        prop_assert!(close(student_t_cdf(t, df) + student_t_sf(t, df), 1.0));
    }
}
