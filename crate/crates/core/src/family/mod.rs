//! Parameterized split feasibility families `(C(p), Q(p), A(p,·))`, their
//! merit function and the level-set description of the solution map.
//!
//! For a parameter `p` the solution set is
//! `Σ(p) = C(p) ∩ A(p,·)⁻¹(Q(p))`, and the merit function
//! `ψ(p,x) = dist(A(p,x), Q(p)) + dist(x, C(p))` vanishes exactly on it.

pub mod expr;
pub mod template;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{ConvexSet, GeometryError, FEAS_TOL};
use crate::linalg::{self, Matrix};
use crate::rng;

pub use expr::{Factor, ParamExpr, Term};
pub use template::{LinearOpMap, RowTemplate, SetTemplate};

/// Power-iteration budget for operator norms.
pub const OPNORM_ITERS: usize = 1000;
pub const OPNORM_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SetRole {
    C,
    Q,
}

impl std::fmt::Display for SetRole {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SetRole::C => f.write_str("C"),
            SetRole::Q => f.write_str("Q"),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FamilyError {
    #[error("{what}: expected dimension {expected}, found {found}")]
    Dimension {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("set {which}(p) at p = {p:?} is invalid: {source}")]
    InvalidInstance {
        which: SetRole,
        p: Vec<f64>,
        source: GeometryError,
    },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("reference pair is not in the graph of the solution map: merit {merit:e} exceeds {tol:e}")]
    InfeasibleReference { merit: f64, tol: f64 },
    #[error("parameter {p:?} lies outside the parameter domain")]
    OutsideDomain { p: Vec<f64> },
    #[error("invalid family: {0}")]
    InvalidSpec(String),
}

/// Axis-aligned parameter domain; bounds may be infinite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamDomain {
    #[serde(with = "crate::serde_inf::vec")]
    pub lo: Vec<f64>,
    #[serde(with = "crate::serde_inf::vec")]
    pub hi: Vec<f64>,
}

impl ParamDomain {
    /// `[0, ∞)^m`
    pub fn nonnegative(m: usize) -> Self {
        Self {
            lo: vec![0.0; m],
            hi: vec![f64::INFINITY; m],
        }
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        p.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(v, (l, h))| *l <= *v && *v <= *h)
    }

    pub fn clamp(&self, p: &[f64]) -> Vec<f64> {
        p.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .map(|(v, (l, h))| v.clamp(*l, *h))
            .collect()
    }
}

/// Nominal pair `(p̄, x̄)` with `x̄ ∈ Σ(p̄)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferencePair {
    pub p: Vec<f64>,
    pub x: Vec<f64>,
}

/// The parameter-dependent data of a family, without the reference pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilySpec {
    pub c: SetTemplate,
    pub q: SetTemplate,
    pub a: LinearOpMap,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub param_domain: Option<ParamDomain>,
}

/// The two distance terms of the merit function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeritParts {
    /// `dist(A(p,x), Q(p))`
    pub aq: f64,
    /// `dist(x, C(p))`
    pub c: f64,
}

impl MeritParts {
    pub fn total(&self) -> f64 {
        self.aq + self.c
    }
}

/// The data of one problem `SFP_p`.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub c: ConvexSet,
    pub q: ConvexSet,
    pub a: Matrix,
}

impl Instance {
    pub fn components(&self, x: &[f64]) -> Result<MeritParts, GeometryError> {
        let ax = self.a.apply(x);
        Ok(MeritParts {
            aq: self.q.distance(&ax)?,
            c: self.c.distance(x)?,
        })
    }

    pub fn merit(&self, x: &[f64]) -> Result<f64, GeometryError> {
        Ok(self.components(x)?.total())
    }

    /// Merit parts together with one subgradient `A*u + v` of `ψ(p,·)` at
    /// `x`, where `u` and `v` are the unit outward normals of `Q(p)` at
    /// `A(p,x)` and of `C(p)` at `x` (zero when inside).
    pub fn subgradient(&self, x: &[f64]) -> Result<(MeritParts, Vec<f64>), GeometryError> {
        let ax = self.a.apply(x);
        let pq = self.q.project_with_tol(&ax, 0.0)?;
        let pc = self.c.project_with_tol(x, 0.0)?;
        let mut g = match &pq.normal {
            Some(u) => self.a.apply_transpose(u),
            None => vec![0.0; x.len()],
        };
        if let Some(v) = &pc.normal {
            for (gi, vi) in g.iter_mut().zip(v) {
                *gi += vi;
            }
        }
        Ok((
            MeritParts {
                aq: pq.distance,
                c: pc.distance,
            },
            g,
        ))
    }
}

/// A validated family together with its reference pair.
#[derive(Debug, Clone, PartialEq)]
pub struct SfpFamily {
    spec: FamilySpec,
    reference: ReferencePair,
    param_dim: usize,
    decision_dim: usize,
    image_dim: usize,
}

impl SfpFamily {
    /// Checks dimensions, the parameter domain and that the reference pair
    /// is feasible within [`FEAS_TOL`].
    pub fn new(spec: FamilySpec, reference: ReferencePair) -> Result<Self, FamilyError> {
        Self::with_tolerance(spec, reference, FEAS_TOL)
    }

    pub fn with_tolerance(spec: FamilySpec, reference: ReferencePair, tol: f64) -> Result<Self, FamilyError> {
        let n = spec.a.cols();
        let k = spec.a.rows();
        let m = reference.p.len();
        if m == 0 {
            return Err(FamilyError::InvalidSpec("parameter dimension must be positive".into()));
        }
        let check = |what: &'static str, expected: usize, found: usize| {
            if expected == found {
                Ok(())
            } else {
                Err(FamilyError::Dimension { what, expected, found })
            }
        };
        check("C(p) dimension vs operator columns", n, spec.c.dim())?;
        check("Q(p) dimension vs operator rows", k, spec.q.dim())?;
        check("reference x", n, reference.x.len())?;
        let max_idx = [
            spec.c.max_param_index(),
            spec.q.max_param_index(),
            spec.a.max_param_index(),
        ]
        .into_iter()
        .flatten()
        .max();
        if let Some(i) = max_idx {
            if i >= m {
                return Err(FamilyError::InvalidSpec(format!(
                    "expression references p{i} but the parameter has dimension {m}"
                )));
            }
        }
        if let Some(d) = &spec.param_domain {
            check("parameter domain lower bound", m, d.lo.len())?;
            check("parameter domain upper bound", m, d.hi.len())?;
            if d.lo.iter().zip(&d.hi).any(|(l, h)| !(l <= h)) {
                return Err(FamilyError::InvalidSpec("parameter domain has lo > hi".into()));
            }
            if !d.contains(&reference.p) {
                return Err(FamilyError::OutsideDomain { p: reference.p.clone() });
            }
        }
        if !linalg::all_finite(&reference.p) || !linalg::all_finite(&reference.x) {
            return Err(FamilyError::InvalidSpec("reference pair must be finite".into()));
        }
        let family = Self {
            spec,
            reference,
            param_dim: m,
            decision_dim: n,
            image_dim: k,
        };
        let merit = family.merit(&family.reference.p, &family.reference.x)?;
        if merit > tol {
            return Err(FamilyError::InfeasibleReference { merit, tol });
        }
        Ok(family)
    }

    pub fn spec(&self) -> &FamilySpec {
        &self.spec
    }

    pub fn reference(&self) -> &ReferencePair {
        &self.reference
    }

    pub fn param_dim(&self) -> usize {
        self.param_dim
    }

    pub fn decision_dim(&self) -> usize {
        self.decision_dim
    }

    pub fn image_dim(&self) -> usize {
        self.image_dim
    }

    pub fn param_domain(&self) -> Option<&ParamDomain> {
        self.spec.param_domain.as_ref()
    }

    pub fn in_domain(&self, p: &[f64]) -> bool {
        self.param_domain().is_none_or(|d| d.contains(p))
    }

    /// True when neither the sets nor the operator depend on `p`.
    pub fn is_parameter_free(&self) -> bool {
        self.spec.c.is_constant() && self.spec.q.is_constant() && self.spec.a.is_constant()
    }

    fn check_p(&self, p: &[f64]) -> Result<(), FamilyError> {
        if p.len() != self.param_dim {
            return Err(FamilyError::Dimension {
                what: "parameter",
                expected: self.param_dim,
                found: p.len(),
            });
        }
        if !linalg::all_finite(p) {
            return Err(FamilyError::InvalidSpec(format!("parameter {p:?} is not finite")));
        }
        Ok(())
    }

    fn check_x(&self, x: &[f64]) -> Result<(), FamilyError> {
        if x.len() != self.decision_dim {
            return Err(FamilyError::Dimension {
                what: "decision vector",
                expected: self.decision_dim,
                found: x.len(),
            });
        }
        Ok(())
    }

    pub fn instantiate(&self, p: &[f64]) -> Result<Instance, FamilyError> {
        self.check_p(p)?;
        let wrap = |which| {
            move |source| FamilyError::InvalidInstance {
                which,
                p: p.to_vec(),
                source,
            }
        };
        let c = self.spec.c.instantiate(p).map_err(wrap(SetRole::C))?;
        let q = self.spec.q.instantiate(p).map_err(wrap(SetRole::Q))?;
        let a = self.spec.a.instantiate(p);
        if !a.is_finite() {
            return Err(FamilyError::InvalidSpec(format!("operator A({p:?}, ·) is not finite")));
        }
        Ok(Instance { c, q, a })
    }

    pub fn merit(&self, p: &[f64], x: &[f64]) -> Result<f64, FamilyError> {
        Ok(self.merit_components(p, x)?.total())
    }

    pub fn merit_components(&self, p: &[f64], x: &[f64]) -> Result<MeritParts, FamilyError> {
        self.check_x(x)?;
        Ok(self.instantiate(p)?.components(x)?)
    }

    /// `A(p,·)* y`
    pub fn adjoint_apply(&self, p: &[f64], y: &[f64]) -> Result<Vec<f64>, FamilyError> {
        self.check_p(p)?;
        if y.len() != self.image_dim {
            return Err(FamilyError::Dimension {
                what: "image vector",
                expected: self.image_dim,
                found: y.len(),
            });
        }
        Ok(self.spec.a.instantiate(p).apply_transpose(y))
    }

    pub fn operator_norm(&self, p: &[f64]) -> Result<f64, FamilyError> {
        self.check_p(p)?;
        Ok(self.spec.a.instantiate(p).operator_norm(OPNORM_ITERS, OPNORM_TOL))
    }

    /// Draws a parameter from the closed ball `B̄(center, radius)`
    /// intersected with the parameter domain.
    pub fn sample_param<R: Rng + ?Sized>(&self, rng: &mut R, center: &[f64], radius: f64) -> Vec<f64> {
        for _ in 0..64 {
            let p = rng::uniform_in_ball(rng, center, radius);
            if self.in_domain(&p) {
                return p;
            }
        }
        // Projection onto the domain box keeps the point inside the ball
        // whenever the center is admissible.
        let p = rng::uniform_in_ball(rng, center, radius);
        self.param_domain().map_or(p.clone(), |d| d.clamp(&p))
    }

    /// Instantiates the family at `count` parameters sampled around `p̄`
    /// and reports the first invalid instance.
    pub fn validate_sampled(&self, radius: f64, count: usize, seed: u64) -> Result<(), FamilyError> {
        for i in 0..count {
            let mut r = rng::rng_for(seed, &[0xFA, i as u64]);
            let p = self.sample_param(&mut r, &self.reference.p, radius);
            self.instantiate(&p)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::family::expr::Factor::*;

    fn p0() -> ParamExpr {
        ParamExpr::monomial(1.0, &[Param(0)])
    }

    fn half_line(lo: ParamExpr) -> SetTemplate {
        SetTemplate::Box {
            lo: vec![lo],
            hi: vec![ParamExpr::constant(f64::INFINITY)],
        }
    }

    /// C(p) = ℝ, Q(p) = [p, ∞), A(p,x) = (p+1)x
    fn plus_one_family() -> SfpFamily {
        let spec = FamilySpec {
            c: SetTemplate::whole_space(1),
            q: half_line(p0()),
            a: LinearOpMap::scalar(p0().plus(ParamExpr::constant(1.0))),
            param_domain: Some(ParamDomain::nonnegative(1)),
        };
        SfpFamily::new(
            spec,
            ReferencePair {
                p: vec![0.0],
                x: vec![0.0],
            },
        )
        .unwrap()
    }

    #[test]
    fn instantiate_and_merit() {
        let f = plus_one_family();
        let inst = f.instantiate(&[1.0]).unwrap();
        assert_eq!(inst.a.get(0, 0), 2.0);
        assert_eq!(inst.q, ConvexSet::boxed(vec![1.0], vec![f64::INFINITY]).unwrap());
        assert_eq!(f.merit(&[1.0], &[0.0]).unwrap(), 1.0);
        assert_eq!(f.merit(&[0.0], &[0.0]).unwrap(), 0.0);
        assert_eq!(f.adjoint_apply(&[1.0], &[-1.0]).unwrap(), vec![-2.0]);
        assert_eq!(f.adjoint_apply(&[1.0], &[0.0]).unwrap(), vec![0.0]);
    }

    #[test]
    fn infeasible_reference_rejected() {
        let spec = plus_one_family().spec().clone();
        let err = SfpFamily::new(
            spec,
            ReferencePair {
                p: vec![1.0],
                x: vec![0.0],
            },
        )
        .unwrap_err();
        assert!(matches!(err, FamilyError::InfeasibleReference { merit, .. } if merit == 1.0));
    }

    #[test]
    fn invalid_instance_names_set_and_parameter() {
        // C(p) = [p, 0] is empty for p > 0
        let spec = FamilySpec {
            c: SetTemplate::Box {
                lo: vec![p0()],
                hi: vec![ParamExpr::constant(0.0)],
            },
            q: SetTemplate::whole_space(1),
            a: LinearOpMap::scalar(ParamExpr::constant(1.0)),
            param_domain: None,
        };
        let f = SfpFamily::new(
            spec,
            ReferencePair {
                p: vec![0.0],
                x: vec![0.0],
            },
        )
        .unwrap();
        let err = f.instantiate(&[0.5]).unwrap_err();
        assert!(matches!(err, FamilyError::InvalidInstance { which: SetRole::C, ref p, .. } if p == &vec![0.5]));
        assert!(f.validate_sampled(1.0, 64, 3).is_err());
    }

    #[test]
    fn parameter_index_out_of_range() {
        let spec = FamilySpec {
            c: SetTemplate::whole_space(1),
            q: half_line(ParamExpr::monomial(1.0, &[Param(1)])),
            a: LinearOpMap::scalar(ParamExpr::constant(1.0)),
            param_domain: None,
        };
        assert!(matches!(
            SfpFamily::new(
                spec,
                ReferencePair {
                    p: vec![0.0],
                    x: vec![0.0]
                }
            ),
            Err(FamilyError::InvalidSpec(_))
        ));
    }

    #[test]
    fn subgradient_combines_both_normals() {
        // C = (−∞, 0], Q = [1, ∞), A = 2: at x = 0.25, Ax = 0.5 ∉ Q, x ∉ C
        let inst = Instance {
            c: ConvexSet::halfspace(vec![1.0], 0.0).unwrap(),
            q: ConvexSet::boxed(vec![1.0], vec![f64::INFINITY]).unwrap(),
            a: Matrix::from_rows(&[vec![2.0]]).unwrap(),
        };
        let (parts, g) = inst.subgradient(&[0.25]).unwrap();
        assert_eq!(parts, MeritParts { aq: 0.5, c: 0.25 });
        assert_eq!(g, vec![-2.0 + 1.0]);
    }

    #[test]
    fn domain_sampling_respects_bounds() {
        let f = plus_one_family();
        let mut r = rng::rng_for(5, &[]);
        for _ in 0..500 {
            let p = f.sample_param(&mut r, &[0.0], 0.5);
            assert!(p[0] >= 0.0 && p[0] <= 0.5);
        }
    }
}
