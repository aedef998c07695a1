use proptest::prelude::*;

use sfp_core::corpus::{all_examples, corpus_example, CorpusId};
use sfp_core::family::{Factor, FamilySpec, LinearOpMap, ParamExpr, ReferencePair, SetTemplate, SfpFamily};
use sfp_core::moduli::{
    estimate_aubin, estimate_calm, estimate_liplsc, estimate_lipusc, geometric_radii, CorpusMap, ModulusPlan, SolverMap,
};
use sfp_core::solver::SolverConfig;

fn reference() -> ReferencePair {
    ReferencePair {
        p: vec![0.0],
        x: vec![0.0],
    }
}

/// C(p) = {p}, Q = ℝ, A = identity, so Σ(p) = {p}.
fn singleton_family() -> SfpFamily {
    SfpFamily::new(
        FamilySpec {
            c: SetTemplate::Singleton {
                point: vec![ParamExpr::monomial(1.0, &[Factor::Param(0)])],
            },
            q: SetTemplate::whole_space(1),
            a: LinearOpMap::scalar(ParamExpr::constant(1.0)),
            param_domain: None,
        },
        reference(),
    )
    .unwrap()
}

/// C = [−1, 1], Q = ℝ₊, A = 1, none depending on p.
fn parameter_free_family() -> SfpFamily {
    SfpFamily::new(
        FamilySpec {
            c: SetTemplate::Box {
                lo: vec![ParamExpr::constant(-1.0)],
                hi: vec![ParamExpr::constant(1.0)],
            },
            q: SetTemplate::Box {
                lo: vec![ParamExpr::constant(0.0)],
                hi: vec![ParamExpr::constant(f64::INFINITY)],
            },
            a: LinearOpMap::scalar(ParamExpr::constant(1.0)),
            param_domain: None,
        },
        reference(),
    )
    .unwrap()
}

fn small_plan() -> ModulusPlan {
    ModulusPlan {
        radii: geometric_radii(3, 0.5, 1e-3),
        samples_per_radius: 24,
        solutions_per_param: 6,
        ..ModulusPlan::default()
    }
}

#[test]
fn singleton_map_has_unit_moduli() {
    let fam = singleton_family();
    let map = SolverMap::new(&fam, SolverConfig::default()).unwrap();
    let plan = small_plan();
    for est in [
        estimate_calm(&map, &plan).unwrap(),
        estimate_lipusc(&map, &plan).unwrap(),
    ] {
        assert!((est.value - 1.0).abs() < 1e-6, "{est:?}");
        assert_eq!(est.mode, "solver");
    }
}

#[test]
fn parameter_free_map_has_zero_moduli() {
    let fam = parameter_free_family();
    let map = SolverMap::new(&fam, SolverConfig::default()).unwrap();
    let plan = small_plan();
    for est in [
        estimate_liplsc(&map, &plan).unwrap(),
        estimate_calm(&map, &plan).unwrap(),
        estimate_lipusc(&map, &plan).unwrap(),
        estimate_aubin(&map, &plan).unwrap(),
    ] {
        assert_eq!(est.value, 0.0, "{est:?}");
    }
}

#[test]
fn solver_mode_tracks_oracle_mode() {
    let ex = corpus_example(CorpusId::Ex33);
    let plan = small_plan();
    let oracle = estimate_liplsc(&CorpusMap::new(&ex), &plan).unwrap();
    let solver = estimate_liplsc(&SolverMap::new(&ex.family, SolverConfig::default()).unwrap(), &plan).unwrap();
    for (o, s) in oracle.per_radius_values.iter().zip(&solver.per_radius_values) {
        assert!((o - s).abs() < 1e-4, "{o} vs {s}");
    }
}

#[test]
fn ex34_aubin_holds_at_every_radius() {
    let ex = corpus_example(CorpusId::Ex34);
    let est = estimate_aubin(&CorpusMap::new(&ex), &ModulusPlan::default()).unwrap();
    assert_eq!(est.radii.last(), Some(&1e-3));
    for v in &est.per_radius_values {
        assert!((v - 1.0).abs() <= 0.05, "{est:?}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn estimator_chain_holds_for_any_seed(seed in any::<u64>(), n in 4usize..40) {
        for ex in all_examples() {
            let map = CorpusMap::new(&ex);
            let plan = ModulusPlan { samples_per_radius: n, seed, ..small_plan() };
            let l = estimate_liplsc(&map, &plan).unwrap();
            let c = estimate_calm(&map, &plan).unwrap();
            let u = estimate_lipusc(&map, &plan).unwrap();
            let a = estimate_aubin(&map, &plan).unwrap();
            prop_assert!(l.value <= a.value + 1e-9);
            prop_assert!(c.value <= a.value + 1e-9);
            prop_assert!(c.value <= u.value + 1e-9);
            for e in [&l, &c, &u, &a] {
                prop_assert!(e.value >= 0.0);
                prop_assert_eq!(e.value, *e.per_radius_values.last().unwrap());
            }
        }
    }
}
