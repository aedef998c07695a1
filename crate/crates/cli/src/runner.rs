//! Executes the analyses of a scenario in declared order.

use std::time::Instant;

use serde::Serialize;
use sfp_core::corpus::{corpus_example, CorpusExample};
use sfp_core::moduli::{
    check_isolated_calmness, check_solv_convexity, compare_bound_theorems, estimate_modulus, verify_error_bound,
    BoundInput, BoundReport, ConvexityReport, CorpusMap, ErrorBoundReport, IsolatedCalmnessReport, ModulusEstimate,
    ModulusKind, SolutionMap, SolverMap,
};
use sfp_core::regularity::{estimate_tau, estimate_tau_global, RegularityEstimate};
use sfp_core::rng::derive_seed;
use sfp_core::solver::{solve, SolveOutcome, SolverConfig};
use sfp_core::SfpFamily;

use crate::error::CliError;
use crate::report::{AnalysisRecord, AnalysisStatus, Report, ReportPayload, Timing, TimingEntry};
use crate::scenario::{Analysis, CompareBoundsParams, FamilySource, ModulusOptions, OracleMode, Scenario};

const SOLVER_SEED_TAG: u64 = 0x5E0;
/// Truncation radius of the global τ used for the upper semicontinuity bound.
const BOUND_GLOBAL_BOX: f64 = 10.0;

/// The family of a scenario, with its closed-form oracle when it comes from
/// the corpus.
pub struct LoadedFamily {
    pub family: SfpFamily,
    pub example: Option<CorpusExample>,
}

impl LoadedFamily {
    pub fn load(scenario: &Scenario) -> Result<Self, CliError> {
        match &scenario.family {
            FamilySource::Corpus(id) => {
                let mut example = corpus_example(*id);
                if let Some(reference) = &scenario.reference {
                    if reference != example.family.reference() {
                        example.family = SfpFamily::new(example.family.spec().clone(), reference.clone())?;
                    }
                }
                Ok(Self {
                    family: example.family.clone(),
                    example: Some(example),
                })
            }
            FamilySource::Inline(spec) => {
                let reference = scenario
                    .reference
                    .clone()
                    .ok_or_else(|| CliError::Invalid("inline families need a \"reference\" pair".into()))?;
                Ok(Self {
                    family: SfpFamily::new(spec.clone(), reference)?,
                    example: None,
                })
            }
        }
    }

    fn default_mode(&self) -> OracleMode {
        if self.example.is_some() {
            OracleMode::Oracle
        } else {
            OracleMode::Solver
        }
    }

    fn map(&self, mode: Option<OracleMode>, solver: &SolverConfig) -> Result<Box<dyn SolutionMap + '_>, String> {
        match (mode.unwrap_or(self.default_mode()), &self.example) {
            (OracleMode::Oracle, Some(example)) => Ok(Box::new(CorpusMap::new(example))),
            (OracleMode::Oracle, None) => Err("oracle mode needs a corpus family".into()),
            (OracleMode::Solver, _) => SolverMap::new(&self.family, solver.clone())
                .map(|m| Box::new(m) as Box<dyn SolutionMap>)
                .map_err(|e| e.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveResult {
    pub p: Vec<f64>,
    pub x0: Vec<f64>,
    #[serde(flatten)]
    pub outcome: SolveOutcome,
}

/// Bound comparisons, split by the τ variant each theorem needs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareBoundsResult {
    pub estimates: Vec<ModulusEstimate>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub local: Option<BoundReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub global: Option<BoundReport>,
    pub any_flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum AnalysisResult {
    Solve(SolveResult),
    Tau(RegularityEstimate),
    ErrorBound(ErrorBoundReport),
    Modulus(ModulusEstimate),
    IsolatedCalmness(IsolatedCalmnessReport),
    Convexity(ConvexityReport),
    CompareBounds(CompareBoundsResult),
}

fn modulus_kind(a: &Analysis) -> Option<(ModulusKind, &ModulusOptions)> {
    match a {
        Analysis::Liplsc(o) => Some((ModulusKind::Liplsc, o)),
        Analysis::Calm(o) => Some((ModulusKind::Calm, o)),
        Analysis::Lipusc(o) => Some((ModulusKind::Lipusc, o)),
        Analysis::Aubin(o) => Some((ModulusKind::Aubin, o)),
        _ => None,
    }
}

struct Context<'a> {
    scenario: &'a Scenario,
    loaded: &'a LoadedFamily,
    solver: SolverConfig,
}

impl Context<'_> {
    fn run(&self, analysis: &Analysis, seed: u64) -> Result<AnalysisResult, String> {
        let family = &self.loaded.family;
        let reference = family.reference();
        let s = |e: &dyn std::fmt::Display| e.to_string();
        if let Some((kind, opts)) = modulus_kind(analysis) {
            let map = self.loaded.map(opts.mode, &self.solver)?;
            return estimate_modulus(map.as_ref(), kind, &opts.plan(seed))
                .map(AnalysisResult::Modulus)
                .map_err(|e| s(&e));
        }
        match analysis {
            Analysis::Solve(a) => {
                let p = a.p.clone().unwrap_or_else(|| reference.p.clone());
                let x0 = a.x0.clone().unwrap_or_else(|| reference.x.clone());
                let outcome = solve(family, &p, &x0, &self.solver).map_err(|e| s(&e))?;
                Ok(AnalysisResult::Solve(SolveResult { p, x0, outcome }))
            }
            Analysis::Tau(a) => {
                let plan = self.scenario.sampling_plan(a.count, seed);
                estimate_tau(family, a.delta, &plan)
                    .map(AnalysisResult::Tau)
                    .map_err(|e| s(&e))
            }
            Analysis::TauGlobal(a) => {
                let plan = self.scenario.sampling_plan(a.count, seed);
                let p = a.p_fixed.as_deref().unwrap_or(&reference.p);
                estimate_tau_global(family, p, a.x_box_radius, &plan)
                    .map(AnalysisResult::Tau)
                    .map_err(|e| s(&e))
            }
            Analysis::ErrorBound(a) => {
                let map = self.loaded.map(a.mode, &self.solver)?;
                verify_error_bound(map.as_ref(), a.constant, a.p_radius, a.x_radius, a.grid_density)
                    .map(AnalysisResult::ErrorBound)
                    .map_err(|e| s(&e))
            }
            Analysis::IsolatedCalmness(a) => {
                let map = self.loaded.map(a.mode, &self.solver)?;
                check_isolated_calmness(map.as_ref(), &a.eta_schedule, a.samples, seed)
                    .map(AnalysisResult::IsolatedCalmness)
                    .map_err(|e| s(&e))
            }
            Analysis::Convexity(a) => {
                let map = self.loaded.map(a.mode, &self.solver)?;
                check_solv_convexity(map.as_ref(), &a.plan(seed))
                    .map(AnalysisResult::Convexity)
                    .map_err(|e| s(&e))
            }
            Analysis::CompareBounds(a) => self.compare_bounds(a, seed),
            Analysis::Liplsc(_) | Analysis::Calm(_) | Analysis::Lipusc(_) | Analysis::Aubin(_) => {
                unreachable!("handled above")
            }
        }
    }

    fn compare_bounds(&self, params: &CompareBoundsParams, seed: u64) -> Result<AnalysisResult, String> {
        let CompareBoundsParams {
            bounds,
            delta,
            count,
            moduli,
        } = params;
        let family = &self.loaded.family;
        let map = self.loaded.map(moduli.mode, &self.solver)?;
        let mut estimates = Vec::with_capacity(bounds.len());
        let (mut local, mut global) = (Vec::new(), Vec::new());
        for (i, b) in bounds.iter().enumerate() {
            let plan = moduli.plan(derive_seed(seed, &[1, i as u64]));
            let est = estimate_modulus(map.as_ref(), b.kind, &plan).map_err(|e| e.to_string())?;
            let input = BoundInput {
                kind: b.kind,
                data: b.data(),
                estimated: est.value,
            };
            if b.kind == ModulusKind::Lipusc {
                global.push(input);
            } else {
                local.push(input);
            }
            estimates.push(est);
        }
        let tau_plan = self.scenario.sampling_plan(*count, derive_seed(seed, &[0]));
        let local = if local.is_empty() {
            None
        } else {
            let tau = estimate_tau(family, *delta, &tau_plan).map_err(|e| e.to_string())?;
            Some(compare_bound_theorems(&local, &tau).map_err(|e| e.to_string())?)
        };
        let global = if global.is_empty() {
            None
        } else {
            let tau = estimate_tau_global(family, &family.reference().p, BOUND_GLOBAL_BOX, &tau_plan)
                .map_err(|e| e.to_string())?;
            Some(compare_bound_theorems(&global, &tau).map_err(|e| e.to_string())?)
        };
        let any_flagged = local.iter().chain(&global).any(|r| r.any_flagged);
        Ok(AnalysisResult::CompareBounds(CompareBoundsResult {
            estimates,
            local,
            global,
            any_flagged,
        }))
    }
}

/// Seed of analysis `index`, derived from the scenario seed.
pub fn analysis_seed(scenario_seed: u64, index: usize) -> u64 {
    derive_seed(scenario_seed, &[index as u64])
}

/// Validates the family, then runs every analysis. Failures of individual
/// analyses are recorded in the report; only input errors abort.
pub fn run_scenario(scenario: &Scenario) -> Result<Report, CliError> {
    scenario
        .solver
        .validate()
        .map_err(|e| CliError::Invalid(format!("solver: {e}")))?;
    let loaded = LoadedFamily::load(scenario)?;
    let mut solver = scenario.solver.clone();
    solver.seed = derive_seed(scenario.seed, &[SOLVER_SEED_TAG, scenario.solver.seed]);
    let ctx = Context {
        scenario,
        loaded: &loaded,
        solver,
    };
    let started = Instant::now();
    let mut records = Vec::with_capacity(scenario.analyses.len());
    let mut timing = Vec::with_capacity(scenario.analyses.len());
    for (index, analysis) in scenario.analyses.iter().enumerate() {
        let seed = analysis_seed(scenario.seed, index);
        let t0 = Instant::now();
        let outcome = ctx.run(analysis, seed);
        timing.push(TimingEntry {
            index,
            kind: analysis.kind().to_string(),
            wall_seconds: t0.elapsed().as_secs_f64(),
        });
        let (status, result, error) = match outcome {
            Ok(r) => (AnalysisStatus::Ok, Some(r), None),
            Err(e) => (AnalysisStatus::Error, None, Some(e)),
        };
        records.push(AnalysisRecord {
            index,
            kind: analysis.kind().to_string(),
            seed,
            status,
            result,
            error,
        });
    }
    Ok(Report {
        payload: ReportPayload::new(scenario, &loaded.family, records),
        timing: Timing {
            total_seconds: started.elapsed().as_secs_f64(),
            analyses: timing,
        },
    })
}

/// Runs on a dedicated pool of `threads` workers, or the global pool.
pub fn run_with_threads(scenario: &Scenario, threads: Option<usize>) -> Result<Report, CliError> {
    match threads {
        None => run_scenario(scenario),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::ThreadPool(e.to_string()))?
            .install(|| run_scenario(scenario)),
    }
}
