use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use sfp_core::corpus::{all_examples, corpus_example, CorpusId};
use sfp_core::linalg;
use sfp_core::moduli::{verify_error_bound, CorpusMap};
use sfp_core::regularity::{drc_holds, estimate_tau, local_samples, strong_slope, tau_from_samples, SamplingPlan};

/// Largest finite-difference descent rate over random unit directions.
fn descent_ratio(f: impl Fn(&[f64]) -> f64, x: &[f64], dirs: usize, rng: &mut ChaCha8Rng) -> f64 {
    let t = 1e-6;
    let fx = f(x);
    (0..dirs)
        .map(|_| {
            let d: Vec<f64> = (0..x.len()).map(|_| StandardNormal.sample(rng)).collect();
            let d = linalg::scale(&d, 1.0 / linalg::norm(&d));
            (fx - f(&linalg::axpy(x, t, &d))) / t
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

#[test]
fn finite_difference_descent_never_beats_the_slope() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for ex in all_examples() {
        let fam = &ex.family;
        let mut checked = 0;
        while checked < 100 {
            let p = fam.sample_param(&mut rng, &fam.reference().p, 1.0);
            let x = vec![rng.random_range(-1.0..1.0)];
            let psi = fam.merit(&p, &x).unwrap();
            if psi <= 1e-6 {
                continue;
            }
            let slope = strong_slope(fam, &p, &x).unwrap();
            let ratio = descent_ratio(|z| fam.merit(&p, z).unwrap(), &x, 64, &mut rng);
            assert!(
                ratio <= slope + 1e-3,
                "{}: p={p:?} x={x:?} ratio {ratio} slope {slope}",
                ex.id
            );
            checked += 1;
        }
    }
}

#[test]
fn tau_decreases_on_nested_samples() {
    let fam = corpus_example(CorpusId::Ex33).family;
    let inner = local_samples(&fam, 0.1, &SamplingPlan::new(2000, 1));
    let mut outer = inner.clone();
    outer.extend(local_samples(&fam, 0.5, &SamplingPlan::new(2000, 2)));
    let t1 = tau_from_samples(&fam, 0.1, &inner, 1).unwrap();
    let t2 = tau_from_samples(&fam, 0.5, &outer, 1).unwrap();
    assert!(t2.tau <= t1.tau);
    assert!(t2.tau_aq <= t1.tau_aq);
}

#[test]
fn more_samples_never_raise_the_estimate() {
    for id in [CorpusId::Ex32, CorpusId::Ex33, CorpusId::Ex34] {
        let fam = corpus_example(id).family;
        let small = estimate_tau(&fam, 0.5, &SamplingPlan::new(1_000, 5)).unwrap();
        let large = estimate_tau(&fam, 0.5, &SamplingPlan::new(100_000, 5)).unwrap();
        assert!(large.tau <= small.tau + 1e-9, "{id}");
    }
    // analytic infimum of ex33 is 1
    let fam = corpus_example(CorpusId::Ex33).family;
    let est = estimate_tau(&fam, 0.5, &SamplingPlan::new(1_000, 5)).unwrap();
    assert!(est.tau >= 1.0 - 0.05);
}

#[test]
fn drc_threshold_gives_a_valid_error_bound() {
    for ex in all_examples() {
        let est = estimate_tau(&ex.family, 0.5, &SamplingPlan::new(5_000, 3)).unwrap();
        let verdict = drc_holds(&est, 0.5);
        if verdict.holds {
            let rep = verify_error_bound(&CorpusMap::new(&ex), 1.0 / est.tau, 0.5, 0.5, 21).unwrap();
            assert!(rep.passed(), "{}: {rep:?}", ex.id);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn estimates_are_reproducible_and_ordered(seed in any::<u64>(), delta in 0.05f64..2.0) {
        let fam = corpus_example(CorpusId::Ex34).family;
        let plan = SamplingPlan::new(300, seed);
        let a = estimate_tau(&fam, delta, &plan).unwrap();
        let b = estimate_tau(&fam, delta, &plan).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(a.tau, a.tau_aq.min(a.tau_c));
        prop_assert!(a.tau_aq >= 0.0 && a.tau_c >= 0.0);
        prop_assert_eq!(a.sample_count, 300);
        prop_assert!(a.aq_region_count + a.c_region_count <= 300);
    }

    #[test]
    fn sampled_pairs_stay_in_the_open_balls(seed in any::<u64>(), delta in 0.01f64..3.0) {
        let ex = corpus_example(CorpusId::Ex33);
        for (p, x) in local_samples(&ex.family, delta, &SamplingPlan::new(100, seed)) {
            prop_assert!(linalg::norm(&p) < delta && linalg::norm(&x) < delta);
            prop_assert!(p[0] >= 0.0);
        }
    }
}
