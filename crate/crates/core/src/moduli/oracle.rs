//! Access to the solution map `Σ`: exact closed forms for corpus families,
//! solver-backed approximations for everything else.

use rand::Rng;
use rayon::prelude::*;

use super::ModuliError;
use crate::corpus::CorpusExample;
use crate::family::SfpFamily;
use crate::linalg;
use crate::rng;
use crate::solver::{self, Distance, SolveStatus, SolverConfig};

/// Relative slack when testing membership of a sampled region.
const REGION_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegionShape {
    Ball,
    Box,
}

/// A closed ball or axis-aligned box around `center`.
#[derive(Debug, Clone, Copy)]
pub struct Region<'a> {
    pub center: &'a [f64],
    pub radius: f64,
    pub shape: RegionShape,
}

impl<'a> Region<'a> {
    pub fn ball(center: &'a [f64], radius: f64) -> Self {
        Self {
            center,
            radius,
            shape: RegionShape::Ball,
        }
    }

    pub fn cube(center: &'a [f64], radius: f64) -> Self {
        Self {
            center,
            radius,
            shape: RegionShape::Box,
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        let r = self.radius * (1.0 + REGION_SLACK);
        match self.shape {
            RegionShape::Ball => linalg::dist(x, self.center) <= r,
            RegionShape::Box => x.iter().zip(self.center).all(|(a, c)| (a - c).abs() <= r),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        match self.shape {
            RegionShape::Ball => rng::uniform_in_ball(rng, self.center, self.radius),
            RegionShape::Box => rng::uniform_in_box(rng, self.center, self.radius),
        }
    }
}

/// The solution map as seen by the estimators.
pub trait SolutionMap: Sync {
    fn family(&self) -> &SfpFamily;

    /// `"oracle"` for closed forms, `"solver"` otherwise.
    fn mode(&self) -> &'static str;

    fn dist(&self, p: &[f64], x: &[f64]) -> Result<Distance, ModuliError>;

    /// Points of `Σ(p)` inside `region`; empty when none were found.
    /// Deterministic in `seed`.
    fn sample_solutions(
        &self,
        p: &[f64],
        region: Region<'_>,
        count: usize,
        seed: u64,
    ) -> Result<Vec<Vec<f64>>, ModuliError>;

    /// A point of `Σ(p)` reached from `start`, if any.
    fn solution_from(&self, p: &[f64], start: &[f64]) -> Result<Option<Vec<f64>>, ModuliError>;
}

/// Closed-form solution map of a corpus example.
pub struct CorpusMap<'a> {
    pub example: &'a CorpusExample,
}

impl<'a> CorpusMap<'a> {
    pub fn new(example: &'a CorpusExample) -> Self {
        Self { example }
    }
}

impl SolutionMap for CorpusMap<'_> {
    fn family(&self) -> &SfpFamily {
        &self.example.family
    }

    fn mode(&self) -> &'static str {
        "oracle"
    }

    fn dist(&self, p: &[f64], x: &[f64]) -> Result<Distance, ModuliError> {
        Ok(self.example.oracle_dist(p, x)?)
    }

    /// Both ends of `Σ(p) ∩ region` followed by uniform interior draws.
    fn sample_solutions(
        &self,
        p: &[f64],
        region: Region<'_>,
        count: usize,
        seed: u64,
    ) -> Result<Vec<Vec<f64>>, ModuliError> {
        let set = self.example.solution_set(p[0])?;
        let crate::corpus::SolutionSet::Interval { lo, hi } = set else {
            return Ok(Vec::new());
        };
        let a = lo.max(region.center[0] - region.radius);
        let b = hi.min(region.center[0] + region.radius);
        if a > b || count == 0 {
            return Ok(Vec::new());
        }
        if a == b {
            return Ok(vec![vec![a]]);
        }
        let mut g = rng::rng_for(seed, &[]);
        let mut out = vec![vec![a], vec![b]];
        out.extend((2..count).map(|_| vec![a + (b - a) * g.random::<f64>()]));
        out.truncate(count);
        Ok(out)
    }

    fn solution_from(&self, p: &[f64], start: &[f64]) -> Result<Option<Vec<f64>>, ModuliError> {
        Ok(self.example.solution_set(p[0])?.nearest(start[0]).map(|x| vec![x]))
    }
}

/// Solver-backed solution map for arbitrary families.
pub struct SolverMap<'a> {
    pub family: &'a SfpFamily,
    pub config: SolverConfig,
}

impl<'a> SolverMap<'a> {
    pub fn new(family: &'a SfpFamily, config: SolverConfig) -> Result<Self, ModuliError> {
        config.validate()?;
        Ok(Self { family, config })
    }
}

impl SolutionMap for SolverMap<'_> {
    fn family(&self) -> &SfpFamily {
        self.family
    }

    fn mode(&self) -> &'static str {
        "solver"
    }

    fn dist(&self, p: &[f64], x: &[f64]) -> Result<Distance, ModuliError> {
        Ok(solver::dist_to_solution(self.family, p, x, &self.config)?.value)
    }

    /// Solves from the region's center and from uniform starts inside the
    /// region, keeping the feasible end points that stay inside it.
    fn sample_solutions(
        &self,
        p: &[f64],
        region: Region<'_>,
        count: usize,
        seed: u64,
    ) -> Result<Vec<Vec<f64>>, ModuliError> {
        let inst = self.family.instantiate(p)?;
        let results: Vec<Option<Vec<f64>>> = (0..count)
            .into_par_iter()
            .map(|i| {
                let start = if i == 0 {
                    region.center.to_vec()
                } else {
                    region.sample(&mut rng::rng_for(seed, &[i as u64]))
                };
                let out = solver::solve_instance(&inst, &start, &self.config, None)?;
                Ok((out.status == SolveStatus::Feasible && region.contains(&out.point)).then_some(out.point))
            })
            .collect::<Result<_, ModuliError>>()?;
        Ok(results.into_iter().flatten().collect())
    }

    fn solution_from(&self, p: &[f64], start: &[f64]) -> Result<Option<Vec<f64>>, ModuliError> {
        let out = solver::solve(self.family, p, start, &self.config)?;
        Ok((out.status == SolveStatus::Feasible).then_some(out.point))
    }
}
