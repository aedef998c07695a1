//! Strong slopes of the merit function and sampled estimates of the dual
//! regularity constants `τ_{A,Q}`, `τ_C` and `τ = min(τ_{A,Q}, τ_C)`.
//!
//! A sampled infimum is an upper bound on the true infimum over the region;
//! it never proves positivity. Estimates therefore carry their sample counts
//! and the witness attaining the minimum.

mod inner;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::family::{FamilyError, Instance, SfpFamily};
use crate::geometry::GeometryError;
use crate::geometry::{normal_cone_generators, ConeSampleOptions};
use crate::rng;

/// Merit components at or below this count as zero when classifying points.
pub const STRICT_TOL: f64 = 1e-8;
/// Open balls are sampled as closed balls shrunk by this relative margin.
pub const OPEN_BALL_SHRINK: f64 = 1e-12;
pub const MIN_SAMPLES: usize = 100;
/// Every this-many-th local sample pins the parameter at `p̄`.
pub const CENTER_SLICE_STRIDE: usize = 8;

const SAMPLE_TAG: u64 = 0x7A0;
const INNER_TAG: u64 = 0x7A1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RegularityError {
    #[error(transparent)]
    Family(#[from] FamilyError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("sample count {count} is below the minimum of {MIN_SAMPLES}")]
    TooFewSamples { count: usize },
    #[error("radius must be positive and finite, got {0}")]
    InvalidRadius(f64),
}

/// Number of samples and the seed they derive from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingPlan {
    pub count: usize,
    #[serde(default)]
    pub seed: u64,
}

impl SamplingPlan {
    pub fn new(count: usize, seed: u64) -> Self {
        Self { count, seed }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    /// `ψ_{A,Q} > STRICT_TOL`
    AqPositive,
    /// `ψ_{A,Q} ≤ STRICT_TOL < ψ_C`
    AqZeroCPositive,
    Feasible,
}

/// A sampled pair, its region and the dual-construction norm there.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionSample {
    pub p: Vec<f64>,
    pub x: Vec<f64>,
    pub classification: Classification,
    pub slope_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegularityEstimate {
    /// Ball radius; for the global variant, the half-width of the x box.
    pub delta: f64,
    #[serde(with = "crate::serde_inf")]
    pub tau_aq: f64,
    #[serde(with = "crate::serde_inf")]
    pub tau_c: f64,
    #[serde(with = "crate::serde_inf")]
    pub tau: f64,
    pub sample_count: usize,
    pub seed: u64,
    /// Samples falling in `[ψ_{A,Q} > 0]`.
    pub aq_region_count: usize,
    /// Samples falling in `[ψ_{A,Q} = 0] ∩ [ψ_C > 0]`.
    pub c_region_count: usize,
    pub min_witness: Option<RegionSample>,
    pub aq_witness: Option<RegionSample>,
    pub c_witness: Option<RegionSample>,
    pub global: bool,
    /// Frozen parameter of the global variant.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_fixed: Option<Vec<f64>>,
    /// Truncation radius of the global variant.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_box_radius: Option<f64>,
}

/// Which sub-problem the inner minimization solves.
#[derive(Clone, Copy, PartialEq)]
enum Mode {
    /// Exact subdifferential of `ψ(p,·)`.
    Slope,
    /// Dual constructions of the regularity constants.
    Tau,
}

/// Classifies `(p, x)` and evaluates the norm minimized over the
/// corresponding dual construction.
fn evaluate(inst: &Instance, x: &[f64], mode: Mode, seed: u64) -> Result<(Classification, f64), GeometryError> {
    let ax = inst.a.apply(x);
    let pq = inst.q.project_with_tol(&ax, 0.0)?;
    let pc = inst.c.project_with_tol(x, 0.0)?;
    let aq_pos = pq.distance > STRICT_TOL;
    let c_pos = pc.distance > STRICT_TOL;
    let rng = || rng::rng_for(seed, &[INNER_TAG]);
    if aq_pos {
        let u = pq.normal.as_ref().expect("normal exists at positive distance");
        let b = inst.a.apply_transpose(u);
        let value = if c_pos {
            let v = pc.normal.as_ref().expect("normal exists at positive distance");
            match mode {
                // ∂ψ = {A*u + v}
                Mode::Slope => inner::norm_of_sum(&b, v),
                // A*u + [0,1]·v: the ray N(x; C + d_C·B) cut by the ball
                Mode::Tau => inner::min_over_cone(&b, std::slice::from_ref(v), |w| w.to_vec(), &mut rng()),
            }
        } else {
            let gens = normal_cone_generators(&inst.c, &pc.point, ConeSampleOptions::default().activity_tol);
            inner::min_over_cone(&b, &gens, |w| w.to_vec(), &mut rng())
        };
        Ok((Classification::AqPositive, value))
    } else if c_pos {
        let v = pc.normal.as_ref().expect("normal exists at positive distance");
        let gens = normal_cone_generators(&inst.q, &pq.point, ConeSampleOptions::default().activity_tol);
        let value = inner::min_over_cone(v, &gens, |w| inst.a.apply_transpose(w), &mut rng());
        Ok((Classification::AqZeroCPositive, value))
    } else {
        Ok((Classification::Feasible, 0.0))
    }
}

/// `dist(0, ∂ψ(p,·)(x))`, the strong slope of the convex merit at `x`.
/// Zero when both merit components are at most [`STRICT_TOL`].
pub fn strong_slope(family: &SfpFamily, p: &[f64], x: &[f64]) -> Result<f64, RegularityError> {
    check_x(family, x)?;
    let inst = family.instantiate(p)?;
    Ok(evaluate(&inst, x, Mode::Slope, 0)?.1)
}

/// Classification and dual-construction norm at a single pair.
pub fn region_sample(family: &SfpFamily, p: &[f64], x: &[f64]) -> Result<RegionSample, RegularityError> {
    check_x(family, x)?;
    let inst = family.instantiate(p)?;
    let (classification, slope_value) = evaluate(&inst, x, Mode::Tau, 0)?;
    Ok(RegionSample {
        p: p.to_vec(),
        x: x.to_vec(),
        classification,
        slope_value,
    })
}

fn check_x(family: &SfpFamily, x: &[f64]) -> Result<(), RegularityError> {
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

fn check_radius(r: f64) -> Result<(), RegularityError> {
    if r > 0.0 && r.is_finite() {
        Ok(())
    } else {
        Err(RegularityError::InvalidRadius(r))
    }
}

fn check_count(count: usize) -> Result<(), RegularityError> {
    if count < MIN_SAMPLES {
        Err(RegularityError::TooFewSamples { count })
    } else {
        Ok(())
    }
}

/// Pairs `(p, x)` drawn from `B(p̄, δ) × B(x̄, δ)` within the parameter
/// domain. Sample `i` depends only on `(seed, i)`, so a plan with more
/// samples extends a plan with fewer.
pub fn local_samples(family: &SfpFamily, delta: f64, plan: &SamplingPlan) -> Vec<(Vec<f64>, Vec<f64>)> {
    let r = delta * (1.0 - OPEN_BALL_SHRINK);
    let reference = family.reference();
    (0..plan.count)
        .into_par_iter()
        .map(|i| {
            let mut g = rng::rng_for(plan.seed, &[SAMPLE_TAG, i as u64]);
            let p = if i % CENTER_SLICE_STRIDE == 0 {
                reference.p.clone()
            } else {
                family.sample_param(&mut g, &reference.p, r)
            };
            let x = rng::uniform_in_ball(&mut g, &reference.x, r);
            (p, x)
        })
        .collect()
}

fn global_samples(family: &SfpFamily, p_fixed: &[f64], radius: f64, plan: &SamplingPlan) -> Vec<(Vec<f64>, Vec<f64>)> {
    let center = &family.reference().x;
    (0..plan.count)
        .into_par_iter()
        .map(|i| {
            let mut g = rng::rng_for(plan.seed, &[SAMPLE_TAG, 1, i as u64]);
            let _: f64 = g.random();
            (p_fixed.to_vec(), rng::uniform_in_box(&mut g, center, radius))
        })
        .collect()
}

type Best = Option<(f64, usize)>;

fn better(a: Best, b: Best) -> Best {
    match (a, b) {
        (None, x) | (x, None) => x,
        (Some(x), Some(y)) => {
            if (y.0, y.1) < (x.0, x.1) || (y.0 == x.0 && y.1 < x.1) {
                Some(y)
            } else {
                Some(x)
            }
        }
    }
}

/// Evaluates the dual constructions over explicit samples and reduces to
/// componentwise minima. Ties go to the lowest sample index.
pub fn tau_from_samples(
    family: &SfpFamily,
    delta: f64,
    samples: &[(Vec<f64>, Vec<f64>)],
    seed: u64,
) -> Result<RegularityEstimate, RegularityError> {
    let evaluated: Vec<(Classification, f64)> = samples
        .par_iter()
        .enumerate()
        .map(|(i, (p, x))| {
            let inst = family.instantiate(p)?;
            let inner_seed = rng::derive_seed(seed, &[i as u64]);
            Ok(evaluate(&inst, x, Mode::Tau, inner_seed)?)
        })
        .collect::<Result<_, RegularityError>>()?;
    let (best_aq, best_c, n_aq, n_c) = evaluated
        .par_iter()
        .enumerate()
        .map(|(i, (cls, v))| match cls {
            Classification::AqPositive => (Some((*v, i)), None, 1usize, 0usize),
            Classification::AqZeroCPositive => (None, Some((*v, i)), 0, 1),
            Classification::Feasible => (None, None, 0, 0),
        })
        .reduce(
            || (None, None, 0, 0),
            |a, b| (better(a.0, b.0), better(a.1, b.1), a.2 + b.2, a.3 + b.3),
        );
    let witness = |b: Best| {
        b.map(|(v, i)| RegionSample {
            p: samples[i].0.clone(),
            x: samples[i].1.clone(),
            classification: evaluated[i].0,
            slope_value: v,
        })
    };
    let tau_aq = best_aq.map_or(f64::INFINITY, |b| b.0);
    let tau_c = best_c.map_or(f64::INFINITY, |b| b.0);
    Ok(RegularityEstimate {
        delta,
        tau_aq,
        tau_c,
        tau: tau_aq.min(tau_c),
        sample_count: samples.len(),
        seed,
        aq_region_count: n_aq,
        c_region_count: n_c,
        min_witness: witness(better(best_aq, best_c)),
        aq_witness: witness(best_aq),
        c_witness: witness(best_c),
        global: false,
        p_fixed: None,
        x_box_radius: None,
    })
}

/// Sampled `τ_{A,Q}(δ)`, `τ_C(δ)` and `τ(δ)` around the reference pair.
///
/// One sample in [`CENTER_SLICE_STRIDE`] pins `p = p̄`, so boundary infima
/// attained on the slice `{p̄} × B(x̄, δ)` are hit exactly rather than only
/// approached.
pub fn estimate_tau(
    family: &SfpFamily,
    delta: f64,
    plan: &SamplingPlan,
) -> Result<RegularityEstimate, RegularityError> {
    check_radius(delta)?;
    check_count(plan.count)?;
    let samples = local_samples(family, delta, plan);
    tau_from_samples(family, delta, &samples, plan.seed)
}

/// Global variant at a fixed parameter. The unbounded x-region is truncated
/// to the box `x̄ ± x_box_radius`, recorded in the estimate.
pub fn estimate_tau_global(
    family: &SfpFamily,
    p_fixed: &[f64],
    x_box_radius: f64,
    plan: &SamplingPlan,
) -> Result<RegularityEstimate, RegularityError> {
    check_radius(x_box_radius)?;
    check_count(plan.count)?;
    family.instantiate(p_fixed)?;
    let samples = global_samples(family, p_fixed, x_box_radius, plan);
    let mut est = tau_from_samples(family, x_box_radius, &samples, plan.seed)?;
    est.global = true;
    est.p_fixed = Some(p_fixed.to_vec());
    est.x_box_radius = Some(x_box_radius);
    Ok(est)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DrcVerdict {
    pub holds: bool,
    #[serde(with = "crate::serde_inf")]
    pub tau: f64,
    pub threshold: f64,
    pub witness: Option<RegionSample>,
}

/// Whether the sampled `τ` reaches `threshold`.
pub fn drc_holds(estimate: &RegularityEstimate, threshold: f64) -> DrcVerdict {
    DrcVerdict {
        holds: estimate.tau >= threshold,
        tau: estimate.tau,
        threshold,
        witness: estimate.min_witness.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{corpus_example, CorpusId};

    fn fam(id: CorpusId) -> SfpFamily {
        corpus_example(id).family
    }

    #[test]
    fn slopes_at_documented_points() {
        let ex33 = fam(CorpusId::Ex33);
        assert!((strong_slope(&ex33, &[1.0], &[0.0]).unwrap() - 2.0).abs() < 1e-12);
        assert_eq!(strong_slope(&ex33, &[0.0], &[0.0]).unwrap(), 0.0);
        let ex31 = fam(CorpusId::Ex31);
        assert!(strong_slope(&ex31, &[0.25], &[-0.25]).unwrap() < 1e-12);
        // both terms active: ∂ψ = {−0.75 + 1}
        assert!((strong_slope(&ex31, &[0.25], &[0.0]).unwrap() - 0.25).abs() < 1e-12);
    }

    #[test]
    fn tau_region_uses_ball_on_c_term() {
        let ex31 = fam(CorpusId::Ex31);
        let s = region_sample(&ex31, &[0.25], &[0.0]).unwrap();
        assert_eq!(s.classification, Classification::AqPositive);
        assert!(s.slope_value < 1e-12);
    }

    #[test]
    fn ex33_tau_is_one() {
        let est = estimate_tau(&fam(CorpusId::Ex33), 0.5, &SamplingPlan::new(2000, 3)).unwrap();
        assert!((est.tau_aq - 1.0).abs() < 1e-12);
        assert_eq!(est.tau_c, f64::INFINITY);
        assert_eq!(est.tau, est.tau_aq);
        assert!(drc_holds(&est, 0.5).holds);
    }

    #[test]
    fn failing_examples() {
        for id in [CorpusId::Ex31, CorpusId::Ex32, CorpusId::Ex34] {
            let est = estimate_tau(&fam(id), 0.5, &SamplingPlan::new(2000, 1)).unwrap();
            assert!(est.tau_aq <= 0.05, "{id}: {est:?}");
            let v = drc_holds(&est, 0.05);
            assert!(!v.holds);
            assert!(v.witness.is_some());
        }
    }

    #[test]
    fn too_few_samples() {
        assert_eq!(
            estimate_tau(&fam(CorpusId::Ex33), 0.5, &SamplingPlan::new(99, 0)),
            Err(RegularityError::TooFewSamples { count: 99 })
        );
        assert!(estimate_tau(&fam(CorpusId::Ex33), 0.0, &SamplingPlan::new(100, 0)).is_err());
    }

    #[test]
    fn global_variants() {
        let est = estimate_tau_global(&fam(CorpusId::Ex33), &[0.0], 10.0, &SamplingPlan::new(1000, 0)).unwrap();
        assert!(est.global);
        assert_eq!(est.x_box_radius, Some(10.0));
        assert!((est.tau_aq - 1.0).abs() < 1e-12);
        assert_eq!(est.tau_c, f64::INFINITY);
        let est = estimate_tau_global(&fam(CorpusId::Ex34), &[0.0], 10.0, &SamplingPlan::new(1000, 0)).unwrap();
        assert_eq!(est.tau_aq, f64::INFINITY);
        assert!((est.tau_c - 1.0).abs() < 1e-12);
    }

    #[test]
    fn deterministic_and_prefix_stable() {
        let f = fam(CorpusId::Ex32);
        let a = estimate_tau(&f, 0.5, &SamplingPlan::new(500, 9)).unwrap();
        let b = estimate_tau(&f, 0.5, &SamplingPlan::new(500, 9)).unwrap();
        assert_eq!(a, b);
        let small = local_samples(&f, 0.5, &SamplingPlan::new(100, 9));
        let large = local_samples(&f, 0.5, &SamplingPlan::new(300, 9));
        assert_eq!(small[..], large[..100]);
    }

    #[test]
    fn infinite_threshold_semantics() {
        let est = estimate_tau(&fam(CorpusId::Ex33), 0.5, &SamplingPlan::new(100, 0)).unwrap();
        let mut e = est.clone();
        e.tau = f64::INFINITY;
        assert!(drc_holds(&e, 1e300).holds);
    }
}
