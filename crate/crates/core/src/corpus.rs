//! Built-in one-dimensional families with closed-form solution maps.
//!
//! All four use `p̄ = x̄ = 0`:
//!
//! | id     | C(p)        | Q(p)           | A(p,x)      | Σ(p)                          |
//! |--------|-------------|----------------|-------------|-------------------------------|
//! | `ex31` | (−∞, −p]    | [p, ∞)         | (p + ½)x    | {0} at p = 0, ∅ for p > 0     |
//! | `ex32` | ℝ           | [p², ∞)        | p x         | ℝ at p = 0, [p, ∞) for p > 0  |
//! | `ex33` | ℝ           | [p, ∞)         | (p + 1)x    | [p/(p+1), ∞)                  |
//! | `ex34` | [−\|p\|, ∞) | [\|p\|p², ∞)   | p² x        | [\|p\|, ∞)                    |
//!
//! The first three are posed on `p ≥ 0`; `ex34` on all of ℝ.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

use crate::family::{Factor, FamilySpec, LinearOpMap, ParamDomain, ParamExpr, ReferencePair, SetTemplate, SfpFamily};
use crate::solver::Distance;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CorpusError {
    #[error("unknown corpus example {0:?} (expected one of ex31, ex32, ex33, ex34)")]
    UnknownId(String),
    #[error("parameter {p} is outside the domain of {id}")]
    OutsideDomain { id: CorpusId, p: f64 },
    #[error("{id}: expected one-dimensional p and x")]
    Dimension { id: CorpusId },
    #[error("{id}: oracle disagrees with the merit function at p = {p}, x = {x} (oracle {oracle:?}, merit {merit:e})")]
    Inconsistent {
        id: CorpusId,
        p: f64,
        x: f64,
        oracle: Distance,
        merit: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorpusId {
    Ex31,
    Ex32,
    Ex33,
    Ex34,
}

impl CorpusId {
    pub const ALL: [CorpusId; 4] = [CorpusId::Ex31, CorpusId::Ex32, CorpusId::Ex33, CorpusId::Ex34];

    pub fn as_str(self) -> &'static str {
        match self {
            CorpusId::Ex31 => "ex31",
            CorpusId::Ex32 => "ex32",
            CorpusId::Ex33 => "ex33",
            CorpusId::Ex34 => "ex34",
        }
    }
}

impl fmt::Display for CorpusId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CorpusId {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        CorpusId::ALL
            .into_iter()
            .find(|id| id.as_str() == s)
            .ok_or_else(|| CorpusError::UnknownId(s.to_string()))
    }
}

/// Closed-form value of `Σ(p) ⊆ ℝ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SolutionSet {
    Empty,
    /// `[lo, hi]`, with infinite ends for half-lines and the whole line.
    Interval {
        lo: f64,
        hi: f64,
    },
}

impl SolutionSet {
    pub fn distance(&self, x: f64) -> Distance {
        match *self {
            SolutionSet::Empty => Distance::Unsolvable,
            SolutionSet::Interval { lo, hi } => Distance::Finite((lo - x).max(x - hi).max(0.0)),
        }
    }

    /// Nearest point of the set to `x`.
    pub fn nearest(&self, x: f64) -> Option<f64> {
        match *self {
            SolutionSet::Empty => None,
            SolutionSet::Interval { lo, hi } => Some(x.clamp(lo, hi)),
        }
    }
}

#[derive(Debug, Clone)]
pub struct CorpusExample {
    pub id: CorpusId,
    pub family: SfpFamily,
    /// Analytic facts the estimators are expected to reproduce.
    pub notes: Vec<&'static str>,
}

fn p() -> ParamExpr {
    ParamExpr::monomial(1.0, &[Factor::Param(0)])
}

fn c(v: f64) -> ParamExpr {
    ParamExpr::constant(v)
}

fn half_line(lo: ParamExpr) -> SetTemplate {
    SetTemplate::Box {
        lo: vec![lo],
        hi: vec![c(f64::INFINITY)],
    }
}

/// Builds one of the built-in examples.
pub fn corpus_example(id: CorpusId) -> CorpusExample {
    let (spec, notes) = match id {
        CorpusId::Ex31 => (
            FamilySpec {
                c: SetTemplate::Halfspace {
                    normal: vec![c(1.0)],
                    offset: ParamExpr::monomial(-1.0, &[Factor::Param(0)]),
                },
                q: half_line(p()),
                a: LinearOpMap::scalar(p().plus(c(0.5))),
                param_domain: Some(ParamDomain::nonnegative(1)),
            },
            vec![
                "Σ(p) = ∅ for every p > 0: not solvable near p̄",
                "τ(δ) = τ_AQ(δ) = 0 for every δ > 0: dual regularity fails",
                "Lipschitz lower semicontinuity fails (modulus +∞)",
            ],
        ),
        CorpusId::Ex32 => (
            FamilySpec {
                c: SetTemplate::whole_space(1),
                q: half_line(ParamExpr::monomial(1.0, &[Factor::Param(0), Factor::Param(0)])),
                a: LinearOpMap::scalar(p()),
                param_domain: Some(ParamDomain::nonnegative(1)),
            },
            vec![
                "dist(x, Σ(p)) = max{p − x, 0}, dist(A(p,x), Q(p)) = max{p² − px, 0}",
                "error bound with any constant σ fails at x = 0 for p < 1/σ",
                "τ(δ) = τ_AQ(δ) = 0, τ_C(δ) = +∞",
            ],
        ),
        CorpusId::Ex33 => (
            FamilySpec {
                c: SetTemplate::whole_space(1),
                q: half_line(p()),
                a: LinearOpMap::scalar(p().plus(c(1.0))),
                param_domain: Some(ParamDomain::nonnegative(1)),
            },
            vec![
                "τ_AQ(δ) = 1 and τ_C(δ) = +∞ for every δ, so τ(δ) = 1",
                "dist(x, Σ(p)) ≤ ψ(p, x) everywhere (error bound with constant 1)",
                "Lipschitz l.s.c. and Aubin moduli equal 1 at (0, 0)",
            ],
        ),
        CorpusId::Ex34 => (
            FamilySpec {
                c: half_line(ParamExpr::monomial(-1.0, &[Factor::AbsParam(0)])),
                q: half_line(ParamExpr::monomial(
                    1.0,
                    &[Factor::AbsParam(0), Factor::Param(0), Factor::Param(0)],
                )),
                a: LinearOpMap::scalar(ParamExpr::monomial(1.0, &[Factor::Param(0), Factor::Param(0)])),
                param_domain: None,
            },
            vec![
                "Σ(p) = [|p|, ∞) has the Aubin property at (0, 0) with modulus 1",
                "τ_AQ(δ) = 0 for every δ: dual regularity fails although Aubin holds",
            ],
        ),
    };
    let family = SfpFamily::new(
        spec,
        ReferencePair {
            p: vec![0.0],
            x: vec![0.0],
        },
    )
    .expect("corpus families are valid");
    CorpusExample { id, family, notes }
}

pub fn all_examples() -> Vec<CorpusExample> {
    CorpusId::ALL.into_iter().map(corpus_example).collect()
}

/// Grid resolution of [`CorpusExample::validate_oracle`].
pub const VALIDATION_GRID: usize = 101;
const VALIDATION_TOL: f64 = 1e-9;

impl CorpusExample {
    pub fn param_domain(&self) -> Option<&ParamDomain> {
        self.family.param_domain()
    }

    fn check_domain(&self, p: f64) -> Result<(), CorpusError> {
        if !p.is_finite() || !self.family.in_domain(&[p]) {
            return Err(CorpusError::OutsideDomain { id: self.id, p });
        }
        Ok(())
    }

    /// Closed-form `Σ(p)`.
    pub fn solution_set(&self, p: f64) -> Result<SolutionSet, CorpusError> {
        self.check_domain(p)?;
        let inf = f64::INFINITY;
        Ok(match self.id {
            CorpusId::Ex31 if p == 0.0 => SolutionSet::Interval { lo: 0.0, hi: 0.0 },
            CorpusId::Ex31 => SolutionSet::Empty,
            CorpusId::Ex32 if p == 0.0 => SolutionSet::Interval { lo: -inf, hi: inf },
            CorpusId::Ex32 => SolutionSet::Interval { lo: p, hi: inf },
            CorpusId::Ex33 => SolutionSet::Interval {
                lo: p / (p + 1.0),
                hi: inf,
            },
            CorpusId::Ex34 => SolutionSet::Interval { lo: p.abs(), hi: inf },
        })
    }

    /// Exact `dist(x, Σ(p))`.
    pub fn oracle_dist(&self, p: &[f64], x: &[f64]) -> Result<Distance, CorpusError> {
        if p.len() != 1 || x.len() != 1 {
            return Err(CorpusError::Dimension { id: self.id });
        }
        Ok(self.solution_set(p[0])?.distance(x[0]))
    }

    /// Checks that the oracle's zero set matches the merit function's on a
    /// `101 × 101` grid over `p ∈ [−1, 1]` (clipped to the domain) and
    /// `x ∈ [−1, 1]`.
    pub fn validate_oracle(&self) -> Result<(), CorpusError> {
        let (plo, phi) = match self.param_domain() {
            Some(d) => (d.lo[0].max(-1.0), d.hi[0].min(1.0)),
            None => (-1.0, 1.0),
        };
        let steps = (VALIDATION_GRID - 1) as f64;
        for i in 0..VALIDATION_GRID {
            let p = plo + (phi - plo) * i as f64 / steps;
            for j in 0..VALIDATION_GRID {
                let x = -1.0 + 2.0 * j as f64 / steps;
                let oracle = self.oracle_dist(&[p], &[x])?;
                let merit = self
                    .family
                    .merit(&[p], &[x])
                    .expect("corpus instances are valid on their domain");
                let oracle_zero = matches!(oracle, Distance::Finite(d) if d <= VALIDATION_TOL);
                if oracle_zero != (merit <= VALIDATION_TOL) {
                    return Err(CorpusError::Inconsistent {
                        id: self.id,
                        p,
                        x,
                        oracle,
                        merit,
                    });
                }
            }
        }
        Ok(())
    }
}
