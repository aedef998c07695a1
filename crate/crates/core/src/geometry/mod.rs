//! Canonical closed convex sets in Euclidean space with exact metric
//! projections, distances and normal cones.

mod cone;
mod dykstra;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{self, Matrix};

pub use cone::{normal_cone_generators, normal_cone_sample, ConeSampleOptions};

/// Absolute residual under which a point counts as a member of a set.
pub const FEAS_TOL: f64 = 1e-9;

/// Dykstra iteration cap for polyhedra.
pub const DYKSTRA_MAX_SWEEPS: usize = 100_000;

/// Sweep-to-sweep change under which Dykstra is considered converged.
pub const DYKSTRA_STEP_TOL: f64 = 1e-12;

/// Relative rank cut-off for the affine pseudo-inverse.
pub const AFFINE_RANK_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("dimension mismatch: set has dimension {expected}, point has {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid set: {0}")]
    InvalidSet(String),
    #[error("projection did not converge after {iterations} sweeps (residual {residual:e})")]
    NotConverged {
        iterations: usize,
        residual: f64,
        last_iterate: Vec<f64>,
    },
    #[error("point is not in the set: residual {residual:e} exceeds tolerance {tol:e}")]
    NotInSet { residual: f64, tol: f64 },
    #[error("point has non-finite entries")]
    NonFinitePoint,
}

/// One row `⟨normal, z⟩ ≤ offset` of a polyhedron.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HalfspaceRow {
    pub normal: Vec<f64>,
    pub offset: f64,
}

/// A nonempty closed convex set of a canonical kind.
///
/// Build through the constructors, which enforce the per-kind invariants;
/// deserialization goes through the same checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", try_from = "repr::SetRepr")]
pub enum ConvexSet {
    /// `{z : ⟨normal, z⟩ ≤ offset}`
    Halfspace {
        normal: Vec<f64>,
        offset: f64,
    },
    /// `{z : lo ≤ z ≤ hi}`, bounds may be infinite.
    Box {
        #[serde(with = "crate::serde_inf::vec")]
        lo: Vec<f64>,
        #[serde(with = "crate::serde_inf::vec")]
        hi: Vec<f64>,
    },
    Ball {
        center: Vec<f64>,
        radius: f64,
    },
    /// `{z : matrix · z = rhs}`
    Affine {
        matrix: Matrix,
        rhs: Vec<f64>,
    },
    Polyhedron {
        rows: Vec<HalfspaceRow>,
        /// Caller vouches for nonemptiness; skips the certification solve.
        #[serde(default)]
        attested: bool,
    },
    Singleton {
        point: Vec<f64>,
    },
}

mod repr {
    use super::*;

    #[derive(Deserialize)]
    #[serde(tag = "kind", rename_all = "snake_case")]
    pub enum SetRepr {
        Halfspace {
            normal: Vec<f64>,
            offset: f64,
        },
        Box {
            #[serde(with = "crate::serde_inf::vec")]
            lo: Vec<f64>,
            #[serde(with = "crate::serde_inf::vec")]
            hi: Vec<f64>,
        },
        Ball {
            center: Vec<f64>,
            radius: f64,
        },
        Affine {
            matrix: Matrix,
            rhs: Vec<f64>,
        },
        Polyhedron {
            rows: Vec<HalfspaceRow>,
            #[serde(default)]
            attested: bool,
        },
        Singleton {
            point: Vec<f64>,
        },
    }

    impl TryFrom<SetRepr> for ConvexSet {
        type Error = GeometryError;

        fn try_from(r: SetRepr) -> Result<Self, Self::Error> {
            match r {
                SetRepr::Halfspace { normal, offset } => ConvexSet::halfspace(normal, offset),
                SetRepr::Box { lo, hi } => ConvexSet::boxed(lo, hi),
                SetRepr::Ball { center, radius } => ConvexSet::ball(center, radius),
                SetRepr::Affine { matrix, rhs } => ConvexSet::affine(matrix, rhs),
                SetRepr::Polyhedron { rows, attested } => ConvexSet::polyhedron(rows, attested),
                SetRepr::Singleton { point } => ConvexSet::singleton(point),
            }
        }
    }
}

/// Result of a metric projection.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub point: Vec<f64>,
    pub distance: f64,
    /// `(x − point)/distance`, present only when `distance` exceeds the
    /// feasibility tolerance.
    pub normal: Option<Vec<f64>>,
}

fn invalid(msg: impl Into<String>) -> GeometryError {
    GeometryError::InvalidSet(msg.into())
}

fn check_finite(v: &[f64], what: &str) -> Result<(), GeometryError> {
    if linalg::all_finite(v) {
        Ok(())
    } else {
        Err(invalid(format!("{what} has non-finite entries")))
    }
}

impl ConvexSet {
    pub fn halfspace(normal: Vec<f64>, offset: f64) -> Result<Self, GeometryError> {
        check_finite(&normal, "halfspace normal")?;
        if normal.is_empty() || linalg::norm(&normal) == 0.0 {
            return Err(invalid("halfspace normal must be nonzero"));
        }
        if !offset.is_finite() {
            return Err(invalid("halfspace offset must be finite"));
        }
        Ok(Self::Halfspace { normal, offset })
    }

    /// Box with possibly infinite bounds. Named `boxed` since `box` is reserved.
    pub fn boxed(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self, GeometryError> {
        if lo.len() != hi.len() || lo.is_empty() {
            return Err(invalid("box bounds must be nonempty and of equal length"));
        }
        for (i, (l, h)) in lo.iter().zip(&hi).enumerate() {
            if l.is_nan() || h.is_nan() {
                return Err(invalid(format!("box bound {i} is NaN")));
            }
            if l > h || *l == f64::INFINITY || *h == f64::NEG_INFINITY {
                return Err(invalid(format!("box bound {i}: lo {l} > hi {h}")));
            }
        }
        Ok(Self::Box { lo, hi })
    }

    /// The whole space `ℝⁿ`, as an unbounded box.
    pub fn whole_space(dim: usize) -> Self {
        Self::Box {
            lo: vec![f64::NEG_INFINITY; dim],
            hi: vec![f64::INFINITY; dim],
        }
    }

    pub fn ball(center: Vec<f64>, radius: f64) -> Result<Self, GeometryError> {
        check_finite(&center, "ball center")?;
        if center.is_empty() {
            return Err(invalid("ball center must be nonempty"));
        }
        if !(radius >= 0.0) || !radius.is_finite() {
            return Err(invalid(format!("ball radius {radius} must be finite and nonnegative")));
        }
        Ok(Self::Ball { center, radius })
    }

    pub fn affine(matrix: Matrix, rhs: Vec<f64>) -> Result<Self, GeometryError> {
        if !matrix.is_finite() {
            return Err(invalid("affine matrix has non-finite entries"));
        }
        check_finite(&rhs, "affine right-hand side")?;
        if matrix.rows() != rhs.len() {
            return Err(invalid(format!(
                "affine matrix has {} rows but right-hand side has {} entries",
                matrix.rows(),
                rhs.len()
            )));
        }
        let set = Self::Affine { matrix, rhs };
        // Nonempty iff rhs lies in the range of the matrix.
        if let Self::Affine { matrix, rhs } = &set {
            let pinv = affine_pinv(matrix);
            let z = mat_vec(&pinv, rhs);
            let back = matrix.apply(&z);
            let gap = linalg::dist(&back, rhs);
            if gap > 1e-9 * (1.0 + linalg::norm(rhs)) {
                return Err(invalid(format!("affine set is empty (range gap {gap:e})")));
            }
        }
        Ok(set)
    }

    pub fn polyhedron(rows: Vec<HalfspaceRow>, attested: bool) -> Result<Self, GeometryError> {
        let dim = rows
            .first()
            .map(|r| r.normal.len())
            .ok_or_else(|| invalid("polyhedron needs at least one row"))?;
        for (i, r) in rows.iter().enumerate() {
            if r.normal.len() != dim {
                return Err(invalid(format!("polyhedron row {i} has wrong dimension")));
            }
            check_finite(&r.normal, "polyhedron row normal")?;
            if linalg::norm(&r.normal) == 0.0 || !r.offset.is_finite() {
                return Err(invalid(format!(
                    "polyhedron row {i} must have a nonzero normal and finite offset"
                )));
            }
        }
        let set = Self::Polyhedron { rows, attested };
        if !attested {
            set.project(&vec![0.0; dim]).map_err(|e| match e {
                GeometryError::NotConverged { residual, .. } => invalid(format!(
                    "polyhedron could not be certified nonempty (residual {residual:e})"
                )),
                other => other,
            })?;
        }
        Ok(set)
    }

    pub fn singleton(point: Vec<f64>) -> Result<Self, GeometryError> {
        check_finite(&point, "singleton point")?;
        if point.is_empty() {
            return Err(invalid("singleton point must be nonempty"));
        }
        Ok(Self::Singleton { point })
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Halfspace { normal, .. } => normal.len(),
            Self::Box { lo, .. } => lo.len(),
            Self::Ball { center, .. } => center.len(),
            Self::Affine { matrix, .. } => matrix.cols(),
            Self::Polyhedron { rows, .. } => rows[0].normal.len(),
            Self::Singleton { point } => point.len(),
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Self::Halfspace { .. } => "halfspace",
            Self::Box { .. } => "box",
            Self::Ball { .. } => "ball",
            Self::Affine { .. } => "affine",
            Self::Polyhedron { .. } => "polyhedron",
            Self::Singleton { .. } => "singleton",
        }
    }

    fn check_point(&self, x: &[f64]) -> Result<(), GeometryError> {
        if x.len() != self.dim() {
            return Err(GeometryError::DimensionMismatch {
                expected: self.dim(),
                found: x.len(),
            });
        }
        if !linalg::all_finite(x) {
            return Err(GeometryError::NonFinitePoint);
        }
        Ok(())
    }

    /// Constraint violation of `z`: zero on the set, positive outside.
    /// For every kind except the affine one this equals the distance up to
    /// row scaling.
    pub fn residual(&self, z: &[f64]) -> Result<f64, GeometryError> {
        self.check_point(z)?;
        Ok(match self {
            Self::Halfspace { normal, offset } => ((linalg::dot(normal, z) - offset) / linalg::norm(normal)).max(0.0),
            Self::Box { lo, hi } => z
                .iter()
                .zip(lo.iter().zip(hi))
                .map(|(v, (l, h))| (l - v).max(v - h).max(0.0))
                .fold(0.0, f64::max),
            Self::Ball { center, radius } => (linalg::dist(z, center) - radius).max(0.0),
            Self::Affine { matrix, rhs } => linalg::dist(&matrix.apply(z), rhs),
            Self::Polyhedron { rows, .. } => rows
                .iter()
                .map(|r| ((linalg::dot(&r.normal, z) - r.offset) / linalg::norm(&r.normal)).max(0.0))
                .fold(0.0, f64::max),
            Self::Singleton { point } => linalg::dist(z, point),
        })
    }

    pub fn contains(&self, z: &[f64], tol: f64) -> Result<bool, GeometryError> {
        Ok(self.residual(z)? <= tol)
    }

    /// Metric projection with the default feasibility tolerance.
    pub fn project(&self, x: &[f64]) -> Result<Projection, GeometryError> {
        self.project_with_tol(x, FEAS_TOL)
    }

    /// Metric projection; `tol` decides whether a unit normal is reported.
    pub fn project_with_tol(&self, x: &[f64], tol: f64) -> Result<Projection, GeometryError> {
        self.check_point(x)?;
        let point = match self {
            Self::Halfspace { normal, offset } => {
                let excess = linalg::dot(normal, x) - offset;
                if excess <= 0.0 {
                    x.to_vec()
                } else {
                    linalg::axpy(x, -excess / linalg::dot(normal, normal), normal)
                }
            }
            Self::Box { lo, hi } => x
                .iter()
                .zip(lo.iter().zip(hi))
                .map(|(v, (l, h))| v.clamp(*l, *h))
                .collect(),
            Self::Ball { center, radius } => {
                let d = linalg::dist(x, center);
                if d <= *radius {
                    x.to_vec()
                } else {
                    let s = radius / d;
                    center.iter().zip(x).map(|(c, v)| c + s * (v - c)).collect()
                }
            }
            Self::Affine { matrix, rhs } => affine_project(matrix, rhs, x),
            Self::Polyhedron { rows, .. } => dykstra::project(rows, x)?,
            Self::Singleton { point } => point.clone(),
        };
        let diff = linalg::sub(x, &point);
        let distance = linalg::norm(&diff);
        let normal = (distance > tol).then(|| linalg::scale(&diff, 1.0 / distance));
        Ok(Projection {
            point,
            distance,
            normal,
        })
    }

    pub fn distance(&self, x: &[f64]) -> Result<f64, GeometryError> {
        Ok(self.project(x)?.distance)
    }
}

fn affine_pinv(matrix: &Matrix) -> nalgebra::DMatrix<f64> {
    let m = matrix.to_nalgebra();
    let svd = m.svd(true, true);
    let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let eps = AFFINE_RANK_TOL * smax.max(f64::MIN_POSITIVE);
    svd.pseudo_inverse(eps).expect("svd computed with both factors")
}

/// `x + Σ vᵢ (uᵢ·b / sᵢ − vᵢ·x)` over the numerically nonzero singular
/// triples. Only the orthogonal projector onto the row space touches `x`, so
/// ill-conditioned rows do not amplify the rounding in `Ax − b`.
fn affine_project(matrix: &Matrix, rhs: &[f64], x: &[f64]) -> Vec<f64> {
    let svd = matrix.to_nalgebra().svd(true, true);
    let (u, v_t) = (
        svd.u.as_ref().expect("svd computed with u"),
        svd.v_t.as_ref().expect("svd computed with v_t"),
    );
    let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let eps = AFFINE_RANK_TOL * smax.max(f64::MIN_POSITIVE);
    let mut z = x.to_vec();
    for (i, &s) in svd.singular_values.iter().enumerate() {
        if s <= eps {
            continue;
        }
        let ub: f64 = u.column(i).iter().zip(rhs).map(|(a, b)| a * b).sum();
        let vx: f64 = v_t.row(i).iter().zip(x).map(|(a, b)| a * b).sum();
        let c = ub / s - vx;
        for (zj, vj) in z.iter_mut().zip(v_t.row(i).iter()) {
            *zj += c * vj;
        }
    }
    z
}

fn mat_vec(m: &nalgebra::DMatrix<f64>, v: &[f64]) -> Vec<f64> {
    let out = m * nalgebra::DVector::from_column_slice(v);
    out.iter().copied().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        linalg::dist(a, b) <= tol
    }

    #[test]
    fn halfspace_boundary_projection() {
        let h = ConvexSet::halfspace(vec![1.0], 0.0).unwrap();
        let pr = h.project(&[2.0]).unwrap();
        assert_eq!(pr.point, vec![0.0]);
        assert_eq!(pr.distance, 2.0);
        assert_eq!(pr.normal, Some(vec![1.0]));
    }

    #[test]
    fn ball_radial_scaling() {
        let b = ConvexSet::ball(vec![0.0, 0.0], 1.0).unwrap();
        let pr = b.project(&[3.0, 4.0]).unwrap();
        assert!(close(&pr.point, &[0.6, 0.8], 1e-15));
        assert!((pr.distance - 4.0).abs() < 1e-15);
    }

    #[test]
    fn half_line_from_quadratic_bound() {
        // Q(p) = [p², ∞) at p = 0.5
        let p: f64 = 0.5;
        let q = ConvexSet::boxed(vec![p * p], vec![f64::INFINITY]).unwrap();
        let pr = q.project(&[0.0]).unwrap();
        assert_eq!(pr.point, vec![0.25]);
        assert_eq!(pr.distance, 0.25);
    }

    #[test]
    fn distance_examples() {
        let b = ConvexSet::boxed(vec![1.0], vec![f64::INFINITY]).unwrap();
        assert_eq!(b.distance(&[0.5]).unwrap(), 0.5);
        // C(p) = (−∞, −p] at p = 0.25, boundary point
        let c = ConvexSet::halfspace(vec![1.0], -0.25).unwrap();
        assert_eq!(c.distance(&[-0.25]).unwrap(), 0.0);
        let s = ConvexSet::singleton(vec![1.0, 2.0]).unwrap();
        assert_eq!(s.distance(&[1.0, 2.0]).unwrap(), 0.0);
    }

    #[test]
    fn interior_point_has_no_normal() {
        let b = ConvexSet::ball(vec![0.0], 1.0).unwrap();
        let pr = b.project(&[0.5]).unwrap();
        assert_eq!(pr.distance, 0.0);
        assert!(pr.normal.is_none());
    }

    #[test]
    fn affine_projection_onto_line() {
        // x + y = 2
        let m = Matrix::from_rows(&[vec![1.0, 1.0]]).unwrap();
        let a = ConvexSet::affine(m, vec![2.0]).unwrap();
        let pr = a.project(&[0.0, 0.0]).unwrap();
        assert!(close(&pr.point, &[1.0, 1.0], 1e-12));
    }

    #[test]
    fn rank_deficient_affine_set() {
        // duplicated row, consistent rhs
        let m = Matrix::from_rows(&[vec![1.0, 0.0], vec![2.0, 0.0]]).unwrap();
        let a = ConvexSet::affine(m.clone(), vec![1.0, 2.0]).unwrap();
        let pr = a.project(&[5.0, 3.0]).unwrap();
        assert!(close(&pr.point, &[1.0, 3.0], 1e-10));
        assert!(ConvexSet::affine(m, vec![1.0, 3.0]).is_err());
    }

    #[test]
    fn polyhedron_corner() {
        // x ≤ 0, y ≤ 0
        let rows = vec![
            HalfspaceRow {
                normal: vec![1.0, 0.0],
                offset: 0.0,
            },
            HalfspaceRow {
                normal: vec![0.0, 1.0],
                offset: 0.0,
            },
        ];
        let p = ConvexSet::polyhedron(rows, false).unwrap();
        let pr = p.project(&[1.0, 2.0]).unwrap();
        assert!(close(&pr.point, &[0.0, 0.0], 1e-10));
    }

    #[test]
    fn empty_polyhedron_rejected() {
        let rows = vec![
            HalfspaceRow {
                normal: vec![1.0],
                offset: -1.0,
            },
            HalfspaceRow {
                normal: vec![-1.0],
                offset: -1.0,
            },
        ];
        assert!(matches!(
            ConvexSet::polyhedron(rows, false),
            Err(GeometryError::InvalidSet(_))
        ));
    }

    #[test]
    fn invariant_violations_rejected() {
        assert!(ConvexSet::halfspace(vec![0.0, 0.0], 1.0).is_err());
        assert!(ConvexSet::boxed(vec![1.0], vec![0.0]).is_err());
        assert!(ConvexSet::ball(vec![0.0], -1.0).is_err());
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let b = ConvexSet::ball(vec![0.0, 0.0], 1.0).unwrap();
        assert_eq!(
            b.project(&[1.0]),
            Err(GeometryError::DimensionMismatch { expected: 2, found: 1 })
        );
    }

    #[test]
    fn serde_uses_kind_tag_and_inf_strings() {
        let s = ConvexSet::boxed(vec![0.25], vec![f64::INFINITY]).unwrap();
        let j = serde_json::to_string(&s).unwrap();
        assert_eq!(j, r#"{"kind":"box","lo":[0.25],"hi":["inf"]}"#);
        let back: ConvexSet = serde_json::from_str(&j).unwrap();
        assert_eq!(back, s);
        let bad = r#"{"kind":"box","lo":[1.0],"hi":[0.0]}"#;
        assert!(serde_json::from_str::<ConvexSet>(bad).is_err());
    }
}
