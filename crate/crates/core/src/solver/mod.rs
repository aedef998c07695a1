//! Points of `Σ(p)` and distances to it.
//!
//! `solve` runs projected subgradient descent on the convex merit
//! `ψ(p,·)`. It starts with Polyak steps `ψ/‖g‖²` (the minimum is presumed
//! to be zero) and, once those stop improving the best residual, falls back
//! to a step-halving subgradient descent that settles on the minimizer of
//! `ψ(p,·)` when `Σ(p)` is empty.

mod nearest;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::family::{FamilyError, Instance, SfpFamily};
use crate::geometry::GeometryError;
use crate::linalg;
use crate::rng;

/// Polyak iterations without a new best residual before switching phase.
const POLYAK_STALL_WINDOW: usize = 50;
/// Consecutive failed steps before the fallback halves its step length.
const HALVING_PATIENCE: usize = 10;
/// Iterations before emptiness evidence may be declared.
const MIN_ITERS_FOR_EVIDENCE: usize = 200;
/// Emptiness needs the best residual above this multiple of `tol_feas`.
const EVIDENCE_RESIDUAL_FACTOR: f64 = 100.0;
/// Relative decrease of the best residual over the trailing tenth of the run
/// below which the run counts as stalled.
const EVIDENCE_REL_DECREASE: f64 = 1e-12;
const BISECTION_STEPS: usize = 80;
/// Residual targeted when polishing candidates before measuring distances;
/// a point with `ψ ≤ tol_feas` may still sit `tol_feas / slope` short of
/// `Σ(p)`.
const POLISH_TOL: f64 = 1e-14;
const POLISH_ITERS: usize = 500;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error(transparent)]
    Family(#[from] FamilyError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("non-finite iterate at iteration {iteration}")]
    NonFinite { iteration: usize },
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),
    #[error("no start reached feasibility and not all starts stalled (best residual {best_residual:e})")]
    Inconclusive { best_residual: f64 },
}

/// Step rule: `"auto"` (Polyak) or a fixed positive step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepRule {
    Auto,
    Fixed(f64),
}

impl Serialize for StepRule {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            StepRule::Auto => s.serialize_str("auto"),
            StepRule::Fixed(h) => s.serialize_f64(*h),
        }
    }
}

impl<'de> Deserialize<'de> for StepRule {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Str(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(h) => Ok(StepRule::Fixed(h)),
            Repr::Str(s) if s == "auto" => Ok(StepRule::Auto),
            Repr::Str(s) => Err(serde::de::Error::custom(format!(
                "step must be \"auto\" or a positive number, got {s:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub step: StepRule,
    pub max_iters: usize,
    pub tol_feas: f64,
    pub multistart_count: usize,
    pub start_box_radius: f64,
    /// Seed for the multistart perturbations.
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            step: StepRule::Auto,
            max_iters: 5_000,
            tol_feas: 1e-9,
            multistart_count: 8,
            start_box_radius: 10.0,
            seed: 0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), SolverError> {
        let bad = |m: String| Err(SolverError::InvalidConfig(m));
        if let StepRule::Fixed(h) = self.step {
            if !(h > 0.0 && h.is_finite()) {
                return bad(format!("fixed step {h} must be positive"));
            }
        }
        if self.max_iters == 0 {
            return bad("max_iters must be at least 1".into());
        }
        if !(self.tol_feas > 0.0) {
            return bad("tol_feas must be positive".into());
        }
        if !(self.start_box_radius > 0.0 && self.start_box_radius.is_finite()) {
            return bad("start_box_radius must be positive".into());
        }
        if self.tol_feas >= self.start_box_radius {
            return bad("tol_feas must be smaller than start_box_radius".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Feasible,
    /// The run stalled with a residual bounded away from zero. Evidence
    /// that `Σ(p)` is empty, not a proof.
    InfeasibleEvidence,
    MaxIters,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveOutcome {
    pub status: SolveStatus,
    /// Best point found.
    pub point: Vec<f64>,
    /// `ψ(p, point)`
    pub residual: f64,
    pub iters: usize,
}

/// `dist(x, Σ(p))`, or the verdict that `Σ(p)` is empty.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Distance {
    Finite(f64),
    Unsolvable,
}

impl Distance {
    pub fn finite(self) -> Option<f64> {
        match self {
            Distance::Finite(d) => Some(d),
            Distance::Unsolvable => None,
        }
    }

    /// Unsolvable maps to `+∞`.
    pub fn or_infinity(self) -> f64 {
        self.finite().unwrap_or(f64::INFINITY)
    }
}

impl Serialize for Distance {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Distance::Finite(d) => crate::serde_inf::serialize(d, s),
            Distance::Unsolvable => s.serialize_str("unsolvable"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistanceOutcome {
    pub value: Distance,
    /// Feasible point realizing `value`.
    pub witness: Option<Vec<f64>>,
}

/// Per-iteration record of a solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TracePoint {
    pub residual: f64,
    pub best: f64,
}

enum Phase {
    Polyak,
    Halving { step: f64, fails: usize },
}

fn rel_decrease(before: f64, after: f64) -> f64 {
    (before - after) / after.max(f64::MIN_POSITIVE)
}

fn stalled(history: &[f64], best: f64, tol: f64) -> bool {
    let k = history.len() - 1;
    if best <= EVIDENCE_RESIDUAL_FACTOR * tol {
        return false;
    }
    let start = (k as f64 * 0.9).floor() as usize;
    rel_decrease(history[start], best) < EVIDENCE_REL_DECREASE
}

/// Solves one already instantiated problem from `x0`.
pub fn solve_instance(
    inst: &Instance,
    x0: &[f64],
    config: &SolverConfig,
    mut trace: Option<&mut Vec<TracePoint>>,
) -> Result<SolveOutcome, SolverError> {
    let tol = config.tol_feas;
    let mut x = x0.to_vec();
    let (parts, mut g) = inst.subgradient(&x)?;
    let mut psi = parts.total();
    if psi <= tol {
        return Ok(SolveOutcome {
            status: SolveStatus::Feasible,
            point: x,
            residual: psi,
            iters: 0,
        });
    }
    let mut best = psi;
    let mut best_x = x.clone();
    let mut best_g = g.clone();
    // history[k] = best residual after k iterations
    let mut history = vec![best];
    let mut since_improve = 0usize;
    let mut phase = Phase::Polyak;

    for k in 1..=config.max_iters {
        let gn = linalg::norm(&g);
        if gn == 0.0 {
            // 0 ∈ ∂ψ(p, x): x minimizes ψ(p,·) and ψ > tol there.
            let status = if best > EVIDENCE_RESIDUAL_FACTOR * tol {
                SolveStatus::InfeasibleEvidence
            } else {
                SolveStatus::MaxIters
            };
            return Ok(SolveOutcome {
                status,
                point: best_x,
                residual: best,
                iters: k - 1,
            });
        }
        let next = match (&phase, config.step) {
            (Phase::Polyak, StepRule::Auto) => linalg::axpy(&x, -psi / (gn * gn), &g),
            (Phase::Polyak, StepRule::Fixed(h)) => linalg::axpy(&x, -h, &g),
            (Phase::Halving { step, .. }, _) => linalg::axpy(&x, -step / gn, &g),
        };
        if !linalg::all_finite(&next) {
            return Err(SolverError::NonFinite { iteration: k });
        }
        x = next;
        let (parts, gx) = inst.subgradient(&x)?;
        psi = parts.total();
        g = gx;
        let improved = psi < best;
        if improved {
            best = psi;
            best_x = x.clone();
            best_g = g.clone();
            since_improve = 0;
        } else {
            since_improve += 1;
        }
        history.push(best);
        if let Some(t) = trace.as_deref_mut() {
            t.push(TracePoint { residual: psi, best });
        }
        if best <= tol {
            return Ok(SolveOutcome {
                status: SolveStatus::Feasible,
                point: best_x,
                residual: best,
                iters: k,
            });
        }
        match &mut phase {
            Phase::Polyak => {
                if since_improve >= POLYAK_STALL_WINDOW {
                    x = best_x.clone();
                    g = best_g.clone();
                    psi = best;
                    phase = Phase::Halving {
                        step: best / linalg::norm(&best_g).max(f64::MIN_POSITIVE),
                        fails: 0,
                    };
                }
            }
            Phase::Halving { step, fails } => {
                if improved {
                    *fails = 0;
                } else {
                    *fails += 1;
                    if *fails >= HALVING_PATIENCE {
                        *step *= 0.5;
                        *fails = 0;
                        x = best_x.clone();
                        g = best_g.clone();
                        psi = best;
                    }
                }
                if k >= MIN_ITERS_FOR_EVIDENCE && stalled(&history, best, tol) {
                    return Ok(SolveOutcome {
                        status: SolveStatus::InfeasibleEvidence,
                        point: best_x,
                        residual: best,
                        iters: k,
                    });
                }
            }
        }
    }
    let status = if matches!(phase, Phase::Halving { .. }) && stalled(&history, best, tol) {
        SolveStatus::InfeasibleEvidence
    } else {
        SolveStatus::MaxIters
    };
    Ok(SolveOutcome {
        status,
        point: best_x,
        residual: best,
        iters: config.max_iters,
    })
}

fn check_dims(family: &SfpFamily, x: &[f64]) -> Result<(), SolverError> {
    if x.len() != family.decision_dim() {
        return Err(FamilyError::Dimension {
            what: "decision vector",
            expected: family.decision_dim(),
            found: x.len(),
        }
        .into());
    }
    Ok(())
}

/// Finds a point of `Σ(p)` starting from `x0`.
pub fn solve(family: &SfpFamily, p: &[f64], x0: &[f64], config: &SolverConfig) -> Result<SolveOutcome, SolverError> {
    config.validate()?;
    check_dims(family, x0)?;
    let inst = family.instantiate(p)?;
    solve_instance(&inst, x0, config, None)
}

/// As [`solve`], also returning the per-iteration residual trace.
pub fn solve_traced(
    family: &SfpFamily,
    p: &[f64],
    x0: &[f64],
    config: &SolverConfig,
) -> Result<(SolveOutcome, Vec<TracePoint>), SolverError> {
    config.validate()?;
    check_dims(family, x0)?;
    let inst = family.instantiate(p)?;
    let mut trace = Vec::new();
    let out = solve_instance(&inst, x0, config, Some(&mut trace))?;
    Ok((out, trace))
}

/// Walks from the feasible `z` back toward `x` along the segment and
/// returns the point closest to `x` whose residual does not exceed `ψ(z)`.
fn pull_toward(inst: &Instance, x: &[f64], z: &[f64], level: f64) -> Result<Vec<f64>, GeometryError> {
    let at = |t: f64| -> Vec<f64> { x.iter().zip(z).map(|(a, b)| a + t * (b - a)).collect() };
    let (mut lo, mut hi) = (0.0, 1.0);
    if inst.merit(x)? <= level {
        return Ok(x.to_vec());
    }
    for _ in 0..BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        if inst.merit(&at(mid))? <= level {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(at(hi))
}

/// Starting points for the multistart: `x` itself, then perturbations in
/// the box `x ± start_box_radius`, each keyed by its start index.
pub fn multistart_points(x: &[f64], config: &SolverConfig) -> Vec<Vec<f64>> {
    std::iter::once(x.to_vec())
        .chain((0..config.multistart_count).map(|i| {
            let mut r = rng::rng_for(config.seed, &[0x5747, i as u64]);
            rng::uniform_in_box(&mut r, x, config.start_box_radius)
        }))
        .collect()
}

/// Upper estimate of `dist(x, Σ(p))` with a feasible witness.
pub fn dist_to_solution_instance(
    inst: &Instance,
    x: &[f64],
    config: &SolverConfig,
) -> Result<DistanceOutcome, SolverError> {
    let tol = config.tol_feas;
    if inst.merit(x)? <= tol {
        return Ok(DistanceOutcome {
            value: Distance::Finite(0.0),
            witness: Some(x.to_vec()),
        });
    }
    let outcomes: Vec<SolveOutcome> = multistart_points(x, config)
        .par_iter()
        .map(|s| solve_instance(inst, s, config, None))
        .collect::<Result<_, _>>()?;
    let mut candidates: Vec<SolveOutcome> = outcomes
        .iter()
        .filter(|o| o.status == SolveStatus::Feasible)
        .cloned()
        .collect();
    if candidates.is_empty() {
        if outcomes.iter().all(|o| o.status == SolveStatus::InfeasibleEvidence) {
            return Ok(DistanceOutcome {
                value: Distance::Unsolvable,
                witness: None,
            });
        }
        let best_residual = outcomes.iter().map(|o| o.residual).fold(f64::INFINITY, f64::min);
        return Err(SolverError::Inconclusive { best_residual });
    }
    // Nearest-point refinement, repaired back to feasibility.
    let near = nearest::nearest_feasible(inst, x)?;
    let repaired = solve_instance(inst, &near, config, None)?;
    if repaired.status == SolveStatus::Feasible {
        candidates.push(repaired);
    }
    let polish = SolverConfig {
        tol_feas: POLISH_TOL,
        max_iters: POLISH_ITERS,
        ..config.clone()
    };
    let mut best: Option<(f64, Vec<f64>)> = None;
    for c in &candidates {
        let polished = solve_instance(inst, &c.point, &polish, None)?;
        let c = if polished.residual < c.residual { &polished } else { c };
        let level = c.residual.max(POLISH_TOL).min(tol);
        let z = pull_toward(inst, x, &c.point, level)?;
        let d = linalg::dist(x, &z);
        if best.as_ref().is_none_or(|(bd, _)| d < *bd) {
            best = Some((d, z));
        }
    }
    let (d, z) = best.expect("at least one candidate");
    Ok(DistanceOutcome {
        value: Distance::Finite(d),
        witness: Some(z),
    })
}

pub fn dist_to_solution(
    family: &SfpFamily,
    p: &[f64],
    x: &[f64],
    config: &SolverConfig,
) -> Result<DistanceOutcome, SolverError> {
    config.validate()?;
    check_dims(family, x)?;
    let inst = family.instantiate(p)?;
    dist_to_solution_instance(&inst, x, config)
}
