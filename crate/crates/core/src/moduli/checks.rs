//! Error bound, isolated calmness, convexity and theorem-bound checks.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{ModuliError, ModulusKind, Region, SolutionMap};
use crate::family::SfpFamily;
use crate::geometry::ConvexSet;
use crate::linalg;
use crate::regularity::RegularityEstimate;
use crate::rng;
use crate::solver::Distance;

/// Additive slack of the error-bound inequality.
pub const ERROR_BOUND_SLACK: f64 = 1e-9;
/// Found solutions within this distance of `x̄` count as `x̄`.
pub const ISOLATION_TOL: f64 = 1e-6;
/// Smallest singular value above which `A(p̄,·)` counts as injective.
pub const INJECTIVITY_TOL: f64 = 1e-10;
const SINGLETON_TOL: f64 = 1e-9;
/// Largest relative residual accepted for joint linearity of `A`.
pub const LINEARITY_TOL: f64 = 1e-10;
pub const LINEARITY_TRIALS: usize = 32;
pub const CONVEXITY_TOL: f64 = 1e-6;
pub const CONVEXITY_WEIGHTS: [f64; 3] = [0.25, 0.5, 0.75];
/// Estimated moduli may exceed their theorem bound by this much.
pub const BOUND_SLACK: f64 = 0.05;

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 || lo == hi {
        return vec![0.5 * (lo + hi)];
    }
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

fn cartesian(axes: &[Vec<f64>]) -> Vec<Vec<f64>> {
    axes.iter().fold(vec![Vec::new()], |acc, axis| {
        acc.iter()
            .flat_map(|prefix| {
                axis.iter().map(move |v| {
                    let mut p = prefix.clone();
                    p.push(*v);
                    p
                })
            })
            .collect()
    })
}

/// Grid over `B̄(center, radius)`, clipped coordinatewise to `[lo, hi]`.
fn ball_grid(center: &[f64], radius: f64, density: usize, bounds: Option<(&[f64], &[f64])>) -> Vec<Vec<f64>> {
    let axes: Vec<Vec<f64>> = center
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let (mut lo, mut hi) = (c - radius, c + radius);
            if let Some((l, h)) = bounds {
                lo = lo.max(l[i]);
                hi = hi.min(h[i]);
            }
            linspace(lo, hi, density)
        })
        .collect();
    cartesian(&axes)
        .into_iter()
        .filter(|p| linalg::dist(p, center) <= radius * (1.0 + 1e-12))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViolationWitness {
    pub p: Vec<f64>,
    pub x: Vec<f64>,
    /// `dist(x, Σ(p))`; `+∞` when `Σ(p)` is empty.
    #[serde(with = "crate::serde_inf")]
    pub dist: f64,
    pub merit: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBoundReport {
    pub constant_used: f64,
    pub grid_size: usize,
    /// `max (dist − constant·ψ − slack)` over the grid.
    #[serde(with = "crate::serde_inf")]
    pub max_violation: f64,
    /// Present iff `max_violation > 0`.
    pub violation_witness: Option<ViolationWitness>,
    pub p_radius: f64,
    pub x_radius: f64,
    pub mode: String,
}

impl ErrorBoundReport {
    pub fn passed(&self) -> bool {
        self.violation_witness.is_none()
    }
}

/// Checks `dist(x, Σ(p)) ≤ constant·ψ(p,x) + 1e-9` on a deterministic grid
/// of `grid_density` points per coordinate over
/// `B̄(p̄, p_radius) × B̄(x̄, x_radius)` (parameters clipped to the domain).
pub fn verify_error_bound(
    map: &dyn SolutionMap,
    constant: f64,
    p_radius: f64,
    x_radius: f64,
    grid_density: usize,
) -> Result<ErrorBoundReport, ModuliError> {
    if !(constant > 0.0 && constant.is_finite()) {
        return Err(ModuliError::InvalidArgument(format!(
            "constant must be positive, got {constant}"
        )));
    }
    for (name, r) in [("p_radius", p_radius), ("x_radius", x_radius)] {
        if !(r >= 0.0 && r.is_finite()) {
            return Err(ModuliError::InvalidArgument(format!(
                "{name} must be nonnegative, got {r}"
            )));
        }
    }
    if grid_density == 0 {
        return Err(ModuliError::InvalidArgument("grid_density must be positive".into()));
    }
    let family = map.family();
    let reference = family.reference();
    let bounds = family.param_domain().map(|d| (d.lo.as_slice(), d.hi.as_slice()));
    let ps = ball_grid(&reference.p, p_radius, grid_density, bounds);
    let xs = ball_grid(&reference.x, x_radius, grid_density, None);
    let pairs: Vec<(usize, usize)> = (0..ps.len()).flat_map(|i| (0..xs.len()).map(move |j| (i, j))).collect();
    let evaluated: Vec<(f64, f64, f64)> = pairs
        .par_iter()
        .map(|&(i, j)| {
            let merit = family.merit(&ps[i], &xs[j])?;
            let dist = map.dist(&ps[i], &xs[j])?.or_infinity();
            Ok((dist - constant * merit - ERROR_BOUND_SLACK, dist, merit))
        })
        .collect::<Result<_, ModuliError>>()?;
    let (worst, idx) = evaluated.par_iter().enumerate().map(|(k, e)| (e.0, k)).reduce(
        || (f64::NEG_INFINITY, usize::MAX),
        |a, b| if b.0 > a.0 || (b.0 == a.0 && b.1 < a.1) { b } else { a },
    );
    let violation_witness = (worst > 0.0).then(|| {
        let (i, j) = pairs[idx];
        ViolationWitness {
            p: ps[i].clone(),
            x: xs[j].clone(),
            dist: evaluated[idx].1,
            merit: evaluated[idx].2,
        }
    });
    Ok(ErrorBoundReport {
        constant_used: constant,
        grid_size: pairs.len(),
        max_violation: worst,
        violation_witness,
        p_radius,
        x_radius,
        mode: map.mode().to_string(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsolatedCalmnessReport {
    pub isolated: bool,
    /// Smallest `η` of the schedule, where the check runs.
    pub eta: f64,
    pub found: usize,
    pub max_distance: f64,
    pub farthest: Option<Vec<f64>>,
    /// `C(p̄)` is the singleton `{x̄}`.
    pub v1: bool,
    /// `Q(p̄)` is the singleton `{A(p̄, x̄)}` and `A(p̄,·)` is injective.
    pub v2: bool,
    pub min_singular_value: f64,
}

/// `set = {point}`. For a convex set containing `point`, any other element
/// `y` pulls the projection of some `point ± step·e_i` off `point`.
fn is_singleton_at(set: &ConvexSet, point: &[f64], step: f64) -> Result<bool, ModuliError> {
    if !set.contains(point, SINGLETON_TOL)? {
        return Ok(false);
    }
    for i in 0..point.len() {
        for s in [step, -step] {
            let mut z = point.to_vec();
            z[i] += s;
            if linalg::dist(&set.project(&z)?.point, point) > SINGLETON_TOL {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// Looks for solutions of `Σ(p̄)` in `B̄(x̄, η)` for the smallest `η` and
/// evaluates the sufficient conditions (v₁), (v₂).
pub fn check_isolated_calmness(
    map: &dyn SolutionMap,
    eta_schedule: &[f64],
    samples: usize,
    seed: u64,
) -> Result<IsolatedCalmnessReport, ModuliError> {
    let ok = !eta_schedule.is_empty()
        && eta_schedule.iter().all(|e| *e > 0.0 && e.is_finite())
        && eta_schedule.windows(2).all(|w| w[1] < w[0]);
    if !ok {
        return Err(ModuliError::BadRadii(eta_schedule.to_vec()));
    }
    let eta = *eta_schedule.last().expect("nonempty");
    let family = map.family();
    let (pbar, xbar) = (&family.reference().p, &family.reference().x);
    let found = map.sample_solutions(pbar, Region::ball(xbar, eta), samples.max(1), seed)?;
    let (max_distance, farthest) = found
        .iter()
        .map(|x| (linalg::dist(x, xbar), x))
        .fold(
            (0.0, None),
            |acc, (d, x)| if d > acc.0 { (d, Some(x.clone())) } else { acc },
        );
    let inst = family.instantiate(pbar)?;
    let v1 = is_singleton_at(&inst.c, xbar, eta)?;
    let sigma = inst.a.min_singular_value();
    let v2 = sigma > INJECTIVITY_TOL && is_singleton_at(&inst.q, &inst.a.apply(xbar), eta)?;
    Ok(IsolatedCalmnessReport {
        isolated: !found.is_empty() && max_distance <= ISOLATION_TOL,
        eta,
        found: found.len(),
        max_distance,
        farthest,
        v1,
        v2,
        min_singular_value: sigma,
    })
}

/// Largest relative residual of `A(Σ tᵢ(pᵢ,xᵢ)) = Σ tᵢ A(pᵢ,xᵢ)` over random
/// affine combinations, plus homogeneity `A(2p, 2x) = 2A(p,x)`.
pub fn joint_linearity_residual(family: &SfpFamily, seed: u64) -> Result<f64, ModuliError> {
    let (pbar, xbar) = (&family.reference().p, &family.reference().x);
    let apply = |p: &[f64], x: &[f64]| -> Result<Vec<f64>, ModuliError> { Ok(family.instantiate(p)?.a.apply(x)) };
    let mut worst: f64 = 0.0;
    for i in 0..LINEARITY_TRIALS {
        let mut g = rng::rng_for(seed, &[0x11, i as u64]);
        let p1 = family.sample_param(&mut g, pbar, 1.0);
        let p2 = family.sample_param(&mut g, pbar, 1.0);
        let x1 = rng::uniform_in_ball(&mut g, xbar, 1.0);
        let x2 = rng::uniform_in_ball(&mut g, xbar, 1.0);
        let t: f64 = g.random();
        let mix = |a: &[f64], b: &[f64]| -> Vec<f64> { a.iter().zip(b).map(|(u, v)| t * u + (1.0 - t) * v).collect() };
        let lhs = apply(&mix(&p1, &p2), &mix(&x1, &x2))?;
        let (a1, a2) = (apply(&p1, &x1)?, apply(&p2, &x2)?);
        let rhs = mix(&a1, &a2);
        let scale = linalg::norm(&a1).max(linalg::norm(&a2)).max(1.0);
        worst = worst.max(linalg::dist(&lhs, &rhs) / scale);
        // Homogeneity separates linear from affine maps.
        let (p2x, x2x) = (linalg::scale(&p1, 2.0), linalg::scale(&x1, 2.0));
        if family.in_domain(&p2x) {
            let h = apply(&p2x, &x2x)?;
            worst = worst.max(linalg::dist(&h, &linalg::scale(&a1, 2.0)) / scale);
        }
    }
    Ok(worst)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConvexityPlan {
    pub pair_samples: usize,
    pub seed: u64,
    /// Parameters are drawn from `B(p̄, p_radius)`.
    pub p_radius: f64,
    /// Solves start from the box `x̄ ± x_radius`.
    pub x_radius: f64,
}

impl Default for ConvexityPlan {
    fn default() -> Self {
        Self {
            pair_samples: 1000,
            seed: 0,
            p_radius: 1.0,
            x_radius: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvexityWitness {
    pub p1: Vec<f64>,
    pub x1: Vec<f64>,
    pub p2: Vec<f64>,
    pub x2: Vec<f64>,
    pub t: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvexityReport {
    pub convex: bool,
    #[serde(with = "crate::serde_inf")]
    pub max_midpoint_violation: f64,
    pub pairs_used: usize,
    pub linearity_residual: f64,
    pub witness: Option<ConvexityWitness>,
}

/// Samples pairs from the graph of `Σ` and checks that the combinations
/// `t(p₁,x₁) + (1−t)(p₂,x₂)` stay in the graph. Convexity of the graphs of
/// `C` and `Q` is the caller's assertion; joint linearity of `A` is tested.
pub fn check_solv_convexity(map: &dyn SolutionMap, plan: &ConvexityPlan) -> Result<ConvexityReport, ModuliError> {
    let family = map.family();
    let residual = joint_linearity_residual(family, plan.seed)?;
    if residual > LINEARITY_TOL {
        return Err(ModuliError::HypothesesNotMet { residual });
    }
    let (pbar, xbar) = (&family.reference().p, &family.reference().x);
    type Found = Option<(f64, ConvexityWitness)>;
    let results: Vec<Found> = (0..plan.pair_samples)
        .into_par_iter()
        .map(|i| -> Result<Found, ModuliError> {
            let mut g = rng::rng_for(plan.seed, &[0x22, i as u64]);
            let p1 = family.sample_param(&mut g, pbar, plan.p_radius);
            let p2 = family.sample_param(&mut g, pbar, plan.p_radius);
            let s1 = rng::uniform_in_box(&mut g, xbar, plan.x_radius);
            let s2 = rng::uniform_in_box(&mut g, xbar, plan.x_radius);
            let (Some(x1), Some(x2)) = (map.solution_from(&p1, &s1)?, map.solution_from(&p2, &s2)?) else {
                return Ok(None);
            };
            let mut best: Found = None;
            for t in CONVEXITY_WEIGHTS {
                let mix = |a: &[f64], b: &[f64]| -> Vec<f64> {
                    a.iter().zip(b).map(|(u, v)| t * u + (1.0 - t) * v).collect()
                };
                let v = match map.dist(&mix(&p1, &p2), &mix(&x1, &x2))? {
                    Distance::Finite(d) => d,
                    Distance::Unsolvable => f64::INFINITY,
                };
                if best.as_ref().is_none_or(|b| v > b.0) {
                    best = Some((
                        v,
                        ConvexityWitness {
                            p1: p1.clone(),
                            x1: x1.clone(),
                            p2: p2.clone(),
                            x2: x2.clone(),
                            t,
                        },
                    ));
                }
            }
            Ok(best)
        })
        .collect::<Result<_, _>>()?;
    let pairs_used = results.iter().filter(|r| r.is_some()).count();
    let worst = results
        .into_iter()
        .flatten()
        .fold(None::<(f64, ConvexityWitness)>, |acc, b| match acc {
            Some(a) if a.0 >= b.0 => Some(a),
            _ => Some(b),
        });
    let max_violation = worst.as_ref().map_or(0.0, |w| w.0);
    Ok(ConvexityReport {
        convex: max_violation <= CONVEXITY_TOL,
        max_midpoint_violation: max_violation,
        pairs_used,
        linearity_residual: residual,
        witness: worst.filter(|w| w.0 > 0.0).map(|w| w.1),
    })
}

/// Moduli of the data entering a theorem bound: the set-valued moduli of
/// `C` and `Q` and the single-valued modulus of `A`, each of the kind the
/// theorem for `kind` requires.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataModuli {
    pub c: f64,
    pub a: f64,
    pub q: f64,
}

impl DataModuli {
    pub fn sum(&self) -> f64 {
        self.c + self.a + self.q
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundInput {
    pub kind: ModulusKind,
    pub data: DataModuli,
    /// Estimated modulus of `Σ`.
    #[serde(with = "crate::serde_inf")]
    pub estimated: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub kind: ModulusKind,
    pub data: DataModuli,
    /// `(c + a + q) / τ`
    #[serde(with = "crate::serde_inf")]
    pub bound: f64,
    #[serde(with = "crate::serde_inf")]
    pub estimated: f64,
    /// Estimate exceeds the bound by more than [`BOUND_SLACK`].
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    #[serde(with = "crate::serde_inf")]
    pub tau: f64,
    pub tau_global: bool,
    pub checks: Vec<BoundCheck>,
    pub any_flagged: bool,
}

/// Compares each estimated modulus with its theorem bound
/// `(data moduli sum) / τ`. The upper semicontinuity bound expects the
/// global estimate; the others the local one.
pub fn compare_bound_theorems(inputs: &[BoundInput], tau: &RegularityEstimate) -> Result<BoundReport, ModuliError> {
    if !(tau.tau > 0.0) {
        return Err(ModuliError::DrcFails { tau: tau.tau });
    }
    let checks: Vec<BoundCheck> = inputs
        .iter()
        .map(|i| {
            let bound = i.data.sum() / tau.tau;
            BoundCheck {
                kind: i.kind,
                data: i.data,
                bound,
                estimated: i.estimated,
                flagged: i.estimated > bound + BOUND_SLACK,
            }
        })
        .collect();
    Ok(BoundReport {
        tau: tau.tau,
        tau_global: tau.global,
        any_flagged: checks.iter().any(|c| c.flagged),
        checks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{corpus_example, CorpusId};
    use crate::family::{Factor, FamilySpec, LinearOpMap, ParamExpr, ReferencePair, SetTemplate};
    use crate::moduli::{CorpusMap, SolverMap};
    use crate::regularity::{estimate_tau, SamplingPlan};
    use crate::solver::SolverConfig;

    fn half_line(lo: ParamExpr) -> SetTemplate {
        SetTemplate::Box {
            lo: vec![lo],
            hi: vec![ParamExpr::constant(f64::INFINITY)],
        }
    }

    fn p0() -> ParamExpr {
        ParamExpr::monomial(1.0, &[Factor::Param(0)])
    }

    /// C(p) = ℝ, Q(p) = [p, ∞), A(p,x) = x
    fn linear_family() -> SfpFamily {
        SfpFamily::new(
            FamilySpec {
                c: SetTemplate::whole_space(1),
                q: half_line(p0()),
                a: LinearOpMap::scalar(ParamExpr::constant(1.0)),
                param_domain: None,
            },
            ReferencePair {
                p: vec![0.0],
                x: vec![0.0],
            },
        )
        .unwrap()
    }

    #[test]
    fn error_bound_examples() {
        let ex33 = corpus_example(CorpusId::Ex33);
        let r = verify_error_bound(&CorpusMap::new(&ex33), 1.0, 1.0, 1.0, 41).unwrap();
        assert!(r.passed(), "{r:?}");
        assert_eq!(r.grid_size, 41 * 41);
        assert!(r.max_violation <= 0.0);

        let ex32 = corpus_example(CorpusId::Ex32);
        let r = verify_error_bound(&CorpusMap::new(&ex32), 10.0, 0.1, 1.0, 41).unwrap();
        let w = r.violation_witness.unwrap();
        assert!(w.p[0] > 0.0 && w.p[0] < 0.1);
        assert!(w.dist > 10.0 * w.merit);

        let ex31 = corpus_example(CorpusId::Ex31);
        let r = verify_error_bound(&CorpusMap::new(&ex31), 1.0, 0.5, 0.5, 11).unwrap();
        assert_eq!(r.max_violation, f64::INFINITY);
    }

    #[test]
    fn error_bound_arguments() {
        let ex33 = corpus_example(CorpusId::Ex33);
        let m = CorpusMap::new(&ex33);
        assert!(verify_error_bound(&m, 0.0, 1.0, 1.0, 5).is_err());
        assert!(verify_error_bound(&m, 1.0, 1.0, 1.0, 0).is_err());
    }

    #[test]
    fn isolated_calmness_cases() {
        let ex32 = corpus_example(CorpusId::Ex32);
        let r = check_isolated_calmness(&CorpusMap::new(&ex32), &[0.1, 0.01], 16, 0).unwrap();
        assert!(!r.isolated);
        assert!((r.max_distance - 0.01).abs() < 1e-12);
        assert!(!r.v1 && !r.v2);

        // C = ℝ, Q(p) = {p}, A = 2: unique solution p/2
        let fam = SfpFamily::new(
            FamilySpec {
                c: SetTemplate::whole_space(1),
                q: SetTemplate::Singleton { point: vec![p0()] },
                a: LinearOpMap::scalar(ParamExpr::constant(2.0)),
                param_domain: None,
            },
            ReferencePair {
                p: vec![0.0],
                x: vec![0.0],
            },
        )
        .unwrap();
        let m = SolverMap::new(&fam, SolverConfig::default()).unwrap();
        let r = check_isolated_calmness(&m, &[0.1], 16, 0).unwrap();
        assert!(r.isolated, "{r:?}");
        assert!(r.v2 && !r.v1);

        // C(p) = {p}
        let fam = SfpFamily::new(
            FamilySpec {
                c: SetTemplate::Singleton { point: vec![p0()] },
                q: SetTemplate::whole_space(1),
                a: LinearOpMap::scalar(ParamExpr::constant(1.0)),
                param_domain: None,
            },
            ReferencePair {
                p: vec![0.0],
                x: vec![0.0],
            },
        )
        .unwrap();
        let m = SolverMap::new(&fam, SolverConfig::default()).unwrap();
        let r = check_isolated_calmness(&m, &[0.1], 16, 0).unwrap();
        assert!(r.isolated && r.v1);
    }

    #[test]
    fn convexity_cases() {
        let fam = linear_family();
        let m = SolverMap::new(&fam, SolverConfig::default()).unwrap();
        let plan = ConvexityPlan {
            pair_samples: 100,
            ..ConvexityPlan::default()
        };
        let r = check_solv_convexity(&m, &plan).unwrap();
        assert!(r.convex, "{r:?}");
        assert_eq!(r.pairs_used, 100);
        assert!(r.max_midpoint_violation <= 1e-6);

        let ex33 = corpus_example(CorpusId::Ex33);
        assert!(matches!(
            check_solv_convexity(&CorpusMap::new(&ex33), &plan),
            Err(ModuliError::HypothesesNotMet { .. })
        ));
    }

    #[test]
    fn bound_comparison() {
        let ex33 = corpus_example(CorpusId::Ex33);
        let tau = estimate_tau(&ex33.family, 0.5, &SamplingPlan::new(1000, 0)).unwrap();
        let input = BoundInput {
            kind: ModulusKind::Liplsc,
            data: DataModuli { c: 0.0, a: 0.0, q: 1.0 },
            estimated: 0.999,
        };
        let rep = compare_bound_theorems(std::slice::from_ref(&input), &tau).unwrap();
        assert!(!rep.any_flagged);
        assert!((rep.checks[0].bound - 1.0).abs() < 1e-9);

        let ex31 = corpus_example(CorpusId::Ex31);
        let tau = estimate_tau(&ex31.family, 0.5, &SamplingPlan::new(1000, 0)).unwrap();
        let err = compare_bound_theorems(&[input], &tau).unwrap_err();
        assert!(err.to_string().starts_with("DRC fails, bound vacuous"));
    }
}
