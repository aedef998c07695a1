//! Empirical Lipschitzian moduli of the solution map `Σ` and the checks
//! built on them: the local error bound, isolated calmness, convexity of
//! `Σ` and the comparison of estimates against the theorem bounds.
//!
//! Each modulus is reported as the largest sampled ratio at every radius of
//! a shrinking schedule; the value at the smallest radius is the headline
//! number and the full curve is kept so convergence can be judged.

mod checks;
mod oracle;

pub use checks::*;
pub use oracle::{CorpusMap, Region, RegionShape, SolutionMap, SolverMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::CorpusError;
use crate::family::{FamilyError, SfpFamily};
use crate::geometry::GeometryError;
use crate::linalg;
use crate::rng;
use crate::solver::{Distance, SolverError};

const PARAM_TAG: u64 = 0x3D0;
const PARAM2_TAG: u64 = 0x3D1;
const BALL_TAG: u64 = 0x3D2;
const BOX_TAG: u64 = 0x3D3;
/// Redraws when a sampled parameter coincides with `p̄`.
const PARAM_REDRAWS: usize = 16;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModuliError {
    #[error(transparent)]
    Family(#[from] FamilyError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("radius schedule is empty")]
    EmptyRadii,
    #[error("radii must be positive, finite and strictly decreasing: {0:?}")]
    BadRadii(Vec<f64>),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("hypotheses not met: A is not jointly linear in (p, x) (residual {residual:e})")]
    HypothesesNotMet { residual: f64 },
    #[error("DRC fails, bound vacuous (tau = {tau})")]
    DrcFails { tau: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModulusKind {
    Liplsc,
    Calm,
    Lipusc,
    Aubin,
}

impl ModulusKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModulusKind::Liplsc => "liplsc",
            ModulusKind::Calm => "calm",
            ModulusKind::Lipusc => "lipusc",
            ModulusKind::Aubin => "aubin",
        }
    }
}

/// Radii, sample counts and regions shared by the four estimators. Running
/// two estimators with the same plan evaluates the same parameter samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModulusPlan {
    /// Strictly decreasing parameter radii.
    pub radii: Vec<f64>,
    pub samples_per_radius: usize,
    /// Solution samples drawn per sampled parameter and region.
    pub solutions_per_param: usize,
    pub seed: u64,
    /// `η`: the ball around `x̄` where solutions are localized.
    pub x_radius: f64,
    /// Truncation box for the excess over `Σ(p)`.
    pub x_box_radius: f64,
}

impl Default for ModulusPlan {
    fn default() -> Self {
        Self {
            radii: geometric_radii(5, 0.5, 1e-3),
            samples_per_radius: 200,
            solutions_per_param: 16,
            seed: 0,
            x_radius: 0.1,
            x_box_radius: 10.0,
        }
    }
}

/// `count` radii shrinking by `factor`, ending at `smallest`.
pub fn geometric_radii(count: usize, factor: f64, smallest: f64) -> Vec<f64> {
    (0..count).rev().map(|i| smallest / factor.powi(i as i32)).collect()
}

impl ModulusPlan {
    pub fn validate(&self) -> Result<(), ModuliError> {
        if self.radii.is_empty() {
            return Err(ModuliError::EmptyRadii);
        }
        let ok = self.radii.iter().all(|r| *r > 0.0 && r.is_finite()) && self.radii.windows(2).all(|w| w[1] < w[0]);
        if !ok {
            return Err(ModuliError::BadRadii(self.radii.clone()));
        }
        for (name, v) in [("x_radius", self.x_radius), ("x_box_radius", self.x_box_radius)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(ModuliError::InvalidArgument(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        if self.samples_per_radius == 0 || self.solutions_per_param == 0 {
            return Err(ModuliError::InvalidArgument("sample counts must be positive".into()));
        }
        Ok(())
    }
}

/// Data attaining the largest ratio at the smallest radius.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModulusWitness {
    /// `p`, or `p₁` for the Aubin estimator.
    pub p: Vec<f64>,
    /// `p₂` of the Aubin estimator.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p2: Option<Vec<f64>>,
    pub x: Vec<f64>,
    #[serde(with = "crate::serde_inf")]
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModulusEstimate {
    pub kind: ModulusKind,
    #[serde(with = "crate::serde_inf")]
    pub value: f64,
    pub radii: Vec<f64>,
    #[serde(with = "crate::serde_inf::vec")]
    pub per_radius_values: Vec<f64>,
    pub witness: Option<ModulusWitness>,
    /// `"oracle"` or `"solver"`.
    pub mode: String,
    pub samples_per_radius: usize,
    /// Solution samples found per radius (zero for `liplsc`).
    pub feasible_counts: Vec<usize>,
    /// Sampled parameters per radius at which no solution was found in the
    /// region; they contribute nothing.
    pub empty_params: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_radius: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_box_radius: Option<f64>,
}

/// Largest ratio among the candidates of one sampled parameter.
#[derive(Clone)]
struct Candidate {
    ratio: f64,
    witness: ModulusWitness,
}

#[derive(Default)]
struct ParamResult {
    best: Option<Candidate>,
    found: usize,
    empty: bool,
}

impl ParamResult {
    fn offer(&mut self, ratio: f64, p: &[f64], p2: Option<&[f64]>, x: &[f64]) {
        if self.best.as_ref().is_none_or(|b| ratio > b.ratio) {
            self.best = Some(Candidate {
                ratio,
                witness: ModulusWitness {
                    p: p.to_vec(),
                    p2: p2.map(<[f64]>::to_vec),
                    x: x.to_vec(),
                    ratio,
                },
            });
        }
    }
}

/// Parameters for radius index `k`: uniform in `B(p̄, r) \ {p̄}` within the
/// domain. `None` when every redraw hit `p̄`.
fn param_sample(family: &SfpFamily, tag: u64, k: usize, j: usize, r: f64, seed: u64) -> Option<Vec<f64>> {
    let center = &family.reference().p;
    let mut g = rng::rng_for(seed, &[tag, k as u64, j as u64]);
    (0..PARAM_REDRAWS)
        .map(|_| family.sample_param(&mut g, center, r))
        .find(|p| linalg::dist(p, center) > 0.0)
}

fn ratio(d: Distance, denom: f64) -> f64 {
    match d {
        Distance::Finite(0.0) => 0.0,
        Distance::Finite(v) => v / denom,
        Distance::Unsolvable => f64::INFINITY,
    }
}

type Points = Vec<Vec<f64>>;

/// Solution samples of `Σ(p)` near `x̄`: `(in the ball, in the box)`.
/// Each list holds its own region's samples plus the other region's samples
/// that fall inside it.
fn localized_solutions(
    map: &dyn SolutionMap,
    p: &[f64],
    plan: &ModulusPlan,
    k: usize,
    j: usize,
) -> Result<(Points, Points), ModuliError> {
    let xbar = &map.family().reference().x;
    let ball = Region::ball(xbar, plan.x_radius);
    let cube = Region::cube(xbar, plan.x_box_radius);
    let path = |tag| rng::derive_seed(plan.seed, &[tag, k as u64, j as u64]);
    let in_ball = map.sample_solutions(p, ball, plan.solutions_per_param, path(BALL_TAG))?;
    let in_box = map.sample_solutions(p, cube, plan.solutions_per_param, path(BOX_TAG))?;
    let mut ball_all = in_ball.clone();
    ball_all.extend(in_box.iter().filter(|x| ball.contains(x)).cloned());
    let mut box_all = in_box;
    box_all.extend(in_ball.into_iter().filter(|x| cube.contains(x)));
    Ok((ball_all, box_all))
}

fn evaluate_param(
    map: &dyn SolutionMap,
    kind: ModulusKind,
    plan: &ModulusPlan,
    k: usize,
    j: usize,
    r: f64,
) -> Result<ParamResult, ModuliError> {
    let family = map.family();
    let (pbar, xbar) = (&family.reference().p, &family.reference().x);
    let mut res = ParamResult::default();
    let Some(p) = param_sample(family, PARAM_TAG, k, j, r, plan.seed) else {
        return Ok(res);
    };
    let dp = linalg::dist(&p, pbar);
    match kind {
        ModulusKind::Liplsc => {
            res.offer(ratio(map.dist(&p, xbar)?, dp), &p, None, xbar);
        }
        ModulusKind::Calm | ModulusKind::Lipusc => {
            let (ball, cube) = localized_solutions(map, &p, plan, k, j)?;
            let xs = if kind == ModulusKind::Calm { ball } else { cube };
            res.found = xs.len();
            res.empty = xs.is_empty();
            for x in &xs {
                res.offer(ratio(map.dist(pbar, x)?, dp), &p, Some(pbar), x);
            }
        }
        ModulusKind::Aubin => {
            // (p̄, x̄) → p: the Lipschitz l.s.c. ratios
            res.offer(ratio(map.dist(&p, xbar)?, dp), pbar, Some(&p), xbar);
            let (ball, _) = localized_solutions(map, &p, plan, k, j)?;
            res.found = ball.len();
            res.empty = ball.is_empty();
            // p → p̄: the calmness ratios
            for x in &ball {
                res.offer(ratio(map.dist(pbar, x)?, dp), &p, Some(pbar), x);
            }
            // p → p₂ for a second sampled parameter
            if let Some(p2) = param_sample(family, PARAM2_TAG, k, j, r, plan.seed) {
                let d12 = linalg::dist(&p, &p2);
                if d12 > 0.0 {
                    for x in &ball {
                        res.offer(ratio(map.dist(&p2, x)?, d12), &p, Some(&p2), x);
                    }
                }
            }
        }
    }
    Ok(res)
}

fn reduce_max(a: (Option<Candidate>, usize), b: (Option<Candidate>, usize)) -> (Option<Candidate>, usize) {
    match (&a.0, &b.0) {
        (None, _) => b,
        (_, None) => a,
        (Some(x), Some(y)) => {
            if y.ratio > x.ratio || (y.ratio == x.ratio && b.1 < a.1) {
                b
            } else {
                a
            }
        }
    }
}

/// Shared driver: per radius, the largest candidate ratio over the sampled
/// parameters. Ties resolve to the lowest sample index.
pub fn estimate_modulus(
    map: &dyn SolutionMap,
    kind: ModulusKind,
    plan: &ModulusPlan,
) -> Result<ModulusEstimate, ModuliError> {
    plan.validate()?;
    let mut per_radius = Vec::with_capacity(plan.radii.len());
    let mut feasible_counts = Vec::with_capacity(plan.radii.len());
    let mut empty_params = Vec::with_capacity(plan.radii.len());
    let mut witness = None;
    for (k, &r) in plan.radii.iter().enumerate() {
        let results: Vec<ParamResult> = (0..plan.samples_per_radius)
            .into_par_iter()
            .map(|j| evaluate_param(map, kind, plan, k, j, r))
            .collect::<Result<_, _>>()?;
        feasible_counts.push(results.iter().map(|r| r.found).sum());
        empty_params.push(results.iter().filter(|r| r.empty).count());
        let (best, _) = results
            .into_par_iter()
            .enumerate()
            .map(|(j, r)| (r.best, j))
            .reduce(|| (None, usize::MAX), reduce_max);
        per_radius.push(best.as_ref().map_or(0.0, |c| c.ratio));
        witness = best.map(|c| c.witness);
    }
    let local = matches!(kind, ModulusKind::Calm | ModulusKind::Aubin);
    Ok(ModulusEstimate {
        kind,
        value: *per_radius.last().expect("radii are nonempty"),
        radii: plan.radii.clone(),
        per_radius_values: per_radius,
        witness,
        mode: map.mode().to_string(),
        samples_per_radius: plan.samples_per_radius,
        feasible_counts,
        empty_params,
        x_radius: local.then_some(plan.x_radius),
        x_box_radius: (kind == ModulusKind::Lipusc).then_some(plan.x_box_radius),
    })
}

/// Lipschitz lower semicontinuity: `dist(x̄, Σ(p)) / d(p, p̄)`.
pub fn estimate_liplsc(map: &dyn SolutionMap, plan: &ModulusPlan) -> Result<ModulusEstimate, ModuliError> {
    estimate_modulus(map, ModulusKind::Liplsc, plan)
}

/// Calmness: `dist(x, Σ(p̄)) / d(p, p̄)` for `x ∈ Σ(p) ∩ B(x̄, η)`.
pub fn estimate_calm(map: &dyn SolutionMap, plan: &ModulusPlan) -> Result<ModulusEstimate, ModuliError> {
    estimate_modulus(map, ModulusKind::Calm, plan)
}

/// Lipschitz upper semicontinuity: as calmness, over `Σ(p)` truncated to the
/// box `x̄ ± x_box_radius`.
pub fn estimate_lipusc(map: &dyn SolutionMap, plan: &ModulusPlan) -> Result<ModulusEstimate, ModuliError> {
    estimate_modulus(map, ModulusKind::Lipusc, plan)
}

/// Aubin property: `dist(x, Σ(p₂)) / d(p₁, p₂)` for `x ∈ Σ(p₁) ∩ B(x̄, η)`.
/// The candidates include every ratio of the l.s.c. and calmness
/// estimators run with the same plan.
pub fn estimate_aubin(map: &dyn SolutionMap, plan: &ModulusPlan) -> Result<ModulusEstimate, ModuliError> {
    estimate_modulus(map, ModulusKind::Aubin, plan)
}
