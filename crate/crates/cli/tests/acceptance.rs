//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each,
//! and exits nonzero if any fails.
//!
//! Run with `cargo test -p sfp-cli --test acceptance`.

use std::panic::{self, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use sfp_cli::{run_with_threads, Scenario};
use sfp_core::corpus::{all_examples, corpus_example, CorpusId};
use sfp_core::family::{Factor, FamilySpec, LinearOpMap, ParamExpr, ReferencePair, SetTemplate, SfpFamily};
use sfp_core::geometry::{ConvexSet, HalfspaceRow};
use sfp_core::linalg::{self, Matrix};
use sfp_core::moduli::{
    check_solv_convexity, compare_bound_theorems, estimate_aubin, estimate_liplsc, verify_error_bound, BoundInput,
    ConvexityPlan, CorpusMap, DataModuli, ModuliError, ModulusKind, ModulusPlan, SolverMap,
};
use sfp_core::regularity::{estimate_tau, strong_slope, RegularityEstimate, SamplingPlan};
use sfp_core::solver::{dist_to_solution, solve, Distance, SolveStatus, SolverConfig};

type Outcome = Result<String, String>;
type Criterion = (usize, &'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn tau_1e5(id: CorpusId, seed: u64) -> (RegularityEstimate, Duration) {
    let fam = corpus_example(id).family;
    let start = Instant::now();
    let est = estimate_tau(&fam, 0.5, &SamplingPlan::new(100_000, seed)).expect("tau estimate");
    (est, start.elapsed())
}

fn criterion_1() -> Outcome {
    let mut lines = Vec::new();
    for seed in [0, 1, 12345] {
        let (est, elapsed) = tau_1e5(CorpusId::Ex33, seed);
        ensure((0.95..=1.0).contains(&est.tau_aq), || {
            format!("seed {seed}: tau_aq = {}", est.tau_aq)
        })?;
        ensure(est.tau_c == f64::INFINITY, || {
            format!("seed {seed}: tau_c = {}", est.tau_c)
        })?;
        ensure((0.95..=1.0).contains(&est.tau), || {
            format!("seed {seed}: tau = {}", est.tau)
        })?;
        ensure(elapsed < Duration::from_secs(5), || {
            format!("seed {seed}: took {elapsed:?}")
        })?;
        lines.push(format!("seed {seed}: tau {:.6} in {:.2?}", est.tau, elapsed));
    }
    Ok(format!("ex33 tau_c = inf, {}", lines.join("; ")))
}

fn criterion_2() -> Outcome {
    let ex = corpus_example(CorpusId::Ex33);
    let rep = verify_error_bound(&CorpusMap::new(&ex), 1.0, 1.0, 1.0, 41).map_err(|e| e.to_string())?;
    ensure(rep.passed(), || format!("violation {:?}", rep.violation_witness))?;
    Ok(format!(
        "{} grid points, max slack-adjusted excess {:e}",
        rep.grid_size, rep.max_violation
    ))
}

fn criterion_3() -> Outcome {
    let ex = corpus_example(CorpusId::Ex31);
    let (est, _) = tau_1e5(CorpusId::Ex31, 3);
    ensure(est.tau <= 0.05, || format!("tau = {}", est.tau))?;
    let cfg = SolverConfig::default();
    for p in [0.1, 0.25] {
        let out = solve(&ex.family, &[p], &[0.0], &cfg).map_err(|e| e.to_string())?;
        ensure(out.status == SolveStatus::InfeasibleEvidence, || {
            format!("p = {p}: {:?}", out.status)
        })?;
    }
    let lip = estimate_liplsc(&CorpusMap::new(&ex), &ModulusPlan::default()).map_err(|e| e.to_string())?;
    ensure(lip.value == f64::INFINITY, || format!("liplsc = {}", lip.value))?;
    let w = lip.witness.as_ref().ok_or("liplsc has no witness")?;
    ensure(w.p[0] > 0.0, || format!("witness p = {:?}", w.p))?;
    Ok(format!(
        "tau = {:e}, solve infeasible_evidence at p = 0.1, 0.25, liplsc = inf at p = {:e}",
        est.tau, w.p[0]
    ))
}

fn criterion_4() -> Outcome {
    let ex = corpus_example(CorpusId::Ex32);
    let rep = verify_error_bound(&CorpusMap::new(&ex), 10.0, 0.1, 1.0, 41).map_err(|e| e.to_string())?;
    let w = rep.violation_witness.as_ref().ok_or("no violation found")?;
    let p = w.p[0];
    ensure(p > 0.0 && p <= 0.1, || format!("witness p = {p}"))?;
    let d0 = ex.oracle_dist(&[p], &[0.0]).map_err(|e| e.to_string())?.or_infinity();
    ensure((d0 - p).abs() <= 1e-12 && d0 > 10.0 * p * p, || {
        format!("dist(0, Σ({p})) = {d0}")
    })?;
    ensure(w.dist > 10.0 * w.merit, || format!("witness {w:?} is not a violation"))?;
    let (est, _) = tau_1e5(CorpusId::Ex32, 4);
    ensure(est.tau <= 0.05, || format!("tau = {}", est.tau))?;
    Ok(format!(
        "witness p = {p}, x = {}: dist {} > 10 psi = {}; dist(0, Σ(p)) = p > 10 p²; tau = {:e}",
        w.x[0],
        w.dist,
        10.0 * w.merit,
        est.tau
    ))
}

fn criterion_5() -> Outcome {
    let ex = corpus_example(CorpusId::Ex34);
    let plan = ModulusPlan::default();
    ensure(plan.radii.last().copied() == Some(1e-3), || {
        format!("radii {:?}", plan.radii)
    })?;
    let aubin = estimate_aubin(&CorpusMap::new(&ex), &plan).map_err(|e| e.to_string())?;
    ensure(aubin.mode == "oracle", || aubin.mode.clone())?;
    ensure((0.95..=1.05).contains(&aubin.value), || {
        format!("aubin = {}", aubin.value)
    })?;
    let (est, _) = tau_1e5(CorpusId::Ex34, 5);
    ensure(est.tau_aq <= 0.05, || format!("tau_aq = {}", est.tau_aq))?;
    Ok(format!(
        "aubin = {} (radii down to 1e-3), tau_aq = {:e}",
        aubin.value, est.tau_aq
    ))
}

fn gauss(r: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(r)).collect()
}

fn uniform(r: &mut ChaCha8Rng, n: usize, half: f64) -> Vec<f64> {
    (0..n).map(|_| r.random_range(-half..half)).collect()
}

fn random_set(r: &mut ChaCha8Rng, dim: usize, kind: usize) -> ConvexSet {
    match kind {
        0 => ConvexSet::halfspace(gauss(r, dim), r.random_range(-2.0..2.0)).unwrap(),
        1 => {
            let lo: Vec<f64> = (0..dim)
                .map(|_| {
                    if r.random_bool(0.2) {
                        f64::NEG_INFINITY
                    } else {
                        r.random_range(-3.0..1.0)
                    }
                })
                .collect();
            let hi = lo
                .iter()
                .map(|l| {
                    if r.random_bool(0.2) {
                        f64::INFINITY
                    } else {
                        l.max(-3.0) + r.random_range(0.0..3.0)
                    }
                })
                .collect();
            ConvexSet::boxed(lo, hi).unwrap()
        }
        2 => ConvexSet::ball(uniform(r, dim, 2.0), r.random_range(0.1..3.0)).unwrap(),
        3 => {
            let rows: Vec<Vec<f64>> = (0..r.random_range(1..=dim)).map(|_| gauss(r, dim)).collect();
            let m = Matrix::from_rows(&rows).unwrap();
            let rhs = m.apply(&uniform(r, dim, 2.0));
            ConvexSet::affine(m, rhs).unwrap()
        }
        4 => {
            let z0 = uniform(r, dim, 1.0);
            let rows = (0..r.random_range(1..=5))
                .map(|_| {
                    let normal = gauss(r, dim);
                    let offset = linalg::dot(&normal, &z0) + r.random_range(0.0..2.0);
                    HalfspaceRow { normal, offset }
                })
                .collect();
            ConvexSet::polyhedron(rows, false).unwrap()
        }
        _ => ConvexSet::singleton(uniform(r, dim, 2.0)).unwrap(),
    }
}

fn criterion_6() -> Outcome {
    let mut r = ChaCha8Rng::seed_from_u64(606);
    let (mut idem, mut nonexp, mut vi): (f64, f64, f64) = (0.0, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for trial in 0..10_000 {
        let dim = 1 + trial % 4;
        let set = random_set(&mut r, dim, trial % 6);
        let x = uniform(&mut r, dim, 5.0);
        let y = uniform(&mut r, dim, 5.0);
        let px = set.project(&x).map_err(|e| e.to_string())?.point;
        let py = set.project(&y).map_err(|e| e.to_string())?.point;
        let ppx = set.project(&px).map_err(|e| e.to_string())?.point;
        idem = idem.max(linalg::dist(&ppx, &px));
        nonexp = nonexp.max(linalg::dist(&px, &py) - linalg::dist(&x, &y));
        vi = vi.max(linalg::dot(&linalg::sub(&x, &px), &linalg::sub(&py, &px)));
    }
    ensure(idem <= 1e-10, || format!("idempotence error {idem:e}"))?;
    ensure(nonexp <= 1e-10, || format!("nonexpansiveness excess {nonexp:e}"))?;
    ensure(vi <= 1e-9, || format!("variational inequality {vi:e}"))?;
    let h = 1e-6;
    let (mut checked, mut trial, mut grad): (usize, usize, f64) = (0, 0, 0.0);
    while checked < 1000 {
        let dim = 1 + trial % 4;
        let set = random_set(&mut r, dim, trial % 6);
        trial += 1;
        let x = uniform(&mut r, dim, 5.0);
        let proj = set.project(&x).map_err(|e| e.to_string())?;
        if proj.distance < 1e-2 {
            continue;
        }
        let n = proj.normal.ok_or("missing normal")?;
        for i in 0..dim {
            let (mut a, mut b) = (x.clone(), x.clone());
            a[i] += h;
            b[i] -= h;
            let fd = (set.distance(&a).unwrap() - set.distance(&b).unwrap()) / (2.0 * h);
            grad = grad.max((fd - n[i]).abs());
        }
        checked += 1;
    }
    ensure(grad <= 1e-4, || format!("gradient error {grad:e}"))?;
    Ok(format!(
        "10^4 projections: idempotence {idem:e}, nonexpansive excess {nonexp:e}, VI {vi:e}; 10^3 gradients: {grad:e}"
    ))
}

fn criterion_7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(707);
    let t = 1e-6;
    let mut worst = f64::NEG_INFINITY;
    for ex in all_examples() {
        let fam = &ex.family;
        let mut checked = 0;
        while checked < 100 {
            let p = fam.sample_param(&mut rng, &fam.reference().p, 1.0);
            let x = vec![rng.random_range(-1.0..1.0)];
            let psi = fam.merit(&p, &x).map_err(|e| e.to_string())?;
            if psi <= 1e-6 {
                continue;
            }
            let slope = strong_slope(fam, &p, &x).map_err(|e| e.to_string())?;
            for _ in 0..64 {
                let d: Vec<f64> = gauss(&mut rng, x.len());
                let d = linalg::scale(&d, 1.0 / linalg::norm(&d));
                let ratio = (psi - fam.merit(&p, &linalg::axpy(&x, t, &d)).unwrap()) / t;
                worst = worst.max(ratio - slope);
                ensure(ratio <= slope + 1e-3, || {
                    format!("{}: p = {p:?}, x = {x:?}, ratio {ratio} > slope {slope}", ex.id)
                })?;
            }
            checked += 1;
        }
    }
    Ok(format!("400 infeasible pairs, max (ratio - slope) = {worst:e}"))
}

fn criterion_8() -> Outcome {
    let cfg = SolverConfig::default();
    let grid = |lo: f64, hi: f64| (0..21).map(move |i| lo + (hi - lo) * i as f64 / 20.0);
    let mut parts = Vec::new();
    for id in [CorpusId::Ex32, CorpusId::Ex33, CorpusId::Ex34] {
        let ex = corpus_example(id);
        let plo = ex.param_domain().map_or(-1.0, |d| d.lo[0].max(-1.0));
        let start = Instant::now();
        let mut worst: f64 = 0.0;
        for p in grid(plo, 1.0) {
            for x in grid(-1.0, 1.0) {
                let oracle = ex.oracle_dist(&[p], &[x]).map_err(|e| e.to_string())?;
                let solved = dist_to_solution(&ex.family, &[p], &[x], &cfg).map_err(|e| e.to_string())?;
                match (oracle, solved.value) {
                    (Distance::Finite(o), Distance::Finite(s)) => worst = worst.max((s - o).abs()),
                    (o, s) => return Err(format!("{id} p = {p}, x = {x}: oracle {o:?}, solver {s:?}")),
                }
            }
        }
        let elapsed = start.elapsed();
        ensure(worst <= 1e-5, || format!("{id}: max error {worst:e}"))?;
        ensure(elapsed < Duration::from_secs(30), || format!("{id}: took {elapsed:?}"))?;
        parts.push(format!("{id} {worst:.1e} in {elapsed:.2?}"));
    }
    Ok(parts.join(", "))
}

/// C(p) = ℝ, Q(p) = [p, ∞), A(p,x) = x
fn jointly_linear_family() -> SfpFamily {
    SfpFamily::new(
        FamilySpec {
            c: SetTemplate::whole_space(1),
            q: SetTemplate::Box {
                lo: vec![ParamExpr::monomial(1.0, &[Factor::Param(0)])],
                hi: vec![ParamExpr::constant(f64::INFINITY)],
            },
            a: LinearOpMap::scalar(ParamExpr::constant(1.0)),
            param_domain: None,
        },
        ReferencePair {
            p: vec![0.0],
            x: vec![0.0],
        },
    )
    .expect("valid family")
}

fn criterion_9() -> Outcome {
    let fam = jointly_linear_family();
    let map = SolverMap::new(&fam, SolverConfig::default()).map_err(|e| e.to_string())?;
    let plan = ConvexityPlan {
        pair_samples: 1000,
        seed: 9,
        ..ConvexityPlan::default()
    };
    let rep = check_solv_convexity(&map, &plan).map_err(|e| e.to_string())?;
    ensure(rep.pairs_used >= 1000, || format!("only {} pairs", rep.pairs_used))?;
    ensure(rep.convex && rep.max_midpoint_violation <= 1e-6, || {
        format!("max midpoint violation {:e}", rep.max_midpoint_violation)
    })?;
    let ex33 = corpus_example(CorpusId::Ex33);
    match check_solv_convexity(&CorpusMap::new(&ex33), &plan) {
        Err(ModuliError::HypothesesNotMet { residual }) => Ok(format!(
            "linear family: {} pairs, max violation {:e}; ex33 rejected (linearity residual {residual:.3})",
            rep.pairs_used, rep.max_midpoint_violation
        )),
        other => Err(format!("ex33 was not rejected: {other:?}")),
    }
}

fn criterion_10() -> Outcome {
    let ex = corpus_example(CorpusId::Ex33);
    let (tau, _) = tau_1e5(CorpusId::Ex33, 0);
    let lip = estimate_liplsc(&CorpusMap::new(&ex), &ModulusPlan::default()).map_err(|e| e.to_string())?;
    let input = BoundInput {
        kind: ModulusKind::Liplsc,
        data: DataModuli { c: 0.0, a: 0.0, q: 1.0 },
        estimated: lip.value,
    };
    let rep = compare_bound_theorems(&[input], &tau).map_err(|e| e.to_string())?;
    let bound = 1.0 / tau.tau + 0.05;
    ensure(lip.value <= bound, || format!("liplsc {} > {bound}", lip.value))?;
    ensure(!rep.any_flagged, || format!("flagged: {:?}", rep.checks))?;
    Ok(format!("liplsc {} <= (0 + 0 + 1)/{} + 0.05", lip.value, tau.tau))
}

fn criterion_11() -> Outcome {
    let scenarios = [
        r#"{"family": {"corpus": "ex34"}, "seed": 2024, "sampling": {"count": 5000},
            "analyses": ["tau", {"kind": "aubin", "samples_per_radius": 50}, "error_bound",
                         {"kind": "tau_global", "p_fixed": [0.25]}, "isolated_calmness"]}"#,
        r#"{"family": {"inline": {"c": {"kind": "box", "lo": ["-inf"], "hi": ["inf"]},
                                   "q": {"kind": "box", "lo": [[{"coef": 1, "factors": ["p0"]}]], "hi": ["inf"]},
                                   "a": [[1]]}},
            "reference": {"p": [0], "x": [0]}, "seed": 77, "sampling": {"count": 1000},
            "analyses": ["tau", {"kind": "calm", "samples_per_radius": 16, "radii": [0.1, 0.01]},
                         {"kind": "convexity", "pair_samples": 100}, {"kind": "solve", "p": [0.5]}]}"#,
    ];
    let mut sizes = Vec::new();
    for text in scenarios {
        let sc = Scenario::from_json(text).map_err(|e| e.to_string())?;
        let run = |threads| {
            run_with_threads(&sc, Some(threads))
                .map(|r| r.payload_json())
                .map_err(|e| e.to_string())
        };
        let a = run(1)?;
        let b = run(1)?;
        let c = run(4)?;
        ensure(a == b, || "two runs with the same seed differ".into())?;
        ensure(a == c, || "1 and 4 threads differ".into())?;
        sizes.push(a.len());
    }
    Ok(format!(
        "payloads of {sizes:?} bytes identical across reruns and 1 vs 4 threads"
    ))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 11] = [
        (1, "ex33 regularity", criterion_1),
        (2, "ex33 error bound", criterion_2),
        (3, "ex31 failure modes", criterion_3),
        (4, "ex32 violation witness", criterion_4),
        (5, "ex34 dissociation", criterion_5),
        (6, "geometry properties", criterion_6),
        (7, "slope consistency", criterion_7),
        (8, "oracle/solver equivalence", criterion_8),
        (9, "convexity of the solution map", criterion_9),
        (10, "theorem-bound consistency", criterion_10),
        (11, "determinism", criterion_11),
    ];
    let mut failed = 0;
    for (n, name, run) in criteria {
        let start = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {n:>2} PASS [{name}] ({secs:.2}s) {detail}"),
            Err(detail) => {
                failed += 1;
                println!("criterion {n:>2} FAIL [{name}] ({secs:.2}s) {detail}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", 11 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
