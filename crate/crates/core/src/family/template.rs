//! Parameter-dependent set descriptors and linear operators.

use serde::{Deserialize, Serialize};

use super::expr::ParamExpr;
use crate::geometry::{ConvexSet, GeometryError, HalfspaceRow};
use crate::linalg::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowTemplate {
    pub normal: Vec<ParamExpr>,
    pub offset: ParamExpr,
}

/// A [`ConvexSet`] whose numeric fields are [`ParamExpr`]s.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SetTemplate {
    Halfspace {
        normal: Vec<ParamExpr>,
        offset: ParamExpr,
    },
    Box {
        lo: Vec<ParamExpr>,
        hi: Vec<ParamExpr>,
    },
    Ball {
        center: Vec<ParamExpr>,
        radius: ParamExpr,
    },
    Affine {
        matrix: Vec<Vec<ParamExpr>>,
        rhs: Vec<ParamExpr>,
    },
    Polyhedron {
        rows: Vec<RowTemplate>,
        #[serde(default)]
        attested: bool,
    },
    Singleton {
        point: Vec<ParamExpr>,
    },
}

fn eval_all(v: &[ParamExpr], p: &[f64]) -> Vec<f64> {
    v.iter().map(|e| e.eval(p)).collect()
}

fn constants(v: &[f64]) -> Vec<ParamExpr> {
    v.iter().map(|&c| ParamExpr::constant(c)).collect()
}

impl SetTemplate {
    /// Template that ignores the parameter.
    pub fn fixed(set: &ConvexSet) -> Self {
        match set {
            ConvexSet::Halfspace { normal, offset } => Self::Halfspace {
                normal: constants(normal),
                offset: ParamExpr::constant(*offset),
            },
            ConvexSet::Box { lo, hi } => Self::Box {
                lo: constants(lo),
                hi: constants(hi),
            },
            ConvexSet::Ball { center, radius } => Self::Ball {
                center: constants(center),
                radius: ParamExpr::constant(*radius),
            },
            ConvexSet::Affine { matrix, rhs } => Self::Affine {
                matrix: matrix.to_rows().iter().map(|r| constants(r)).collect(),
                rhs: constants(rhs),
            },
            ConvexSet::Polyhedron { rows, attested } => Self::Polyhedron {
                rows: rows
                    .iter()
                    .map(|r| RowTemplate {
                        normal: constants(&r.normal),
                        offset: ParamExpr::constant(r.offset),
                    })
                    .collect(),
                attested: *attested,
            },
            ConvexSet::Singleton { point } => Self::Singleton {
                point: constants(point),
            },
        }
    }

    pub fn whole_space(dim: usize) -> Self {
        Self::fixed(&ConvexSet::whole_space(dim))
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Halfspace { normal, .. } => normal.len(),
            Self::Box { lo, .. } => lo.len(),
            Self::Ball { center, .. } => center.len(),
            Self::Affine { matrix, .. } => matrix.first().map_or(0, Vec::len),
            Self::Polyhedron { rows, .. } => rows.first().map_or(0, |r| r.normal.len()),
            Self::Singleton { point } => point.len(),
        }
    }

    fn exprs(&self) -> Vec<&ParamExpr> {
        match self {
            Self::Halfspace { normal, offset } => normal.iter().chain(std::iter::once(offset)).collect(),
            Self::Box { lo, hi } => lo.iter().chain(hi).collect(),
            Self::Ball { center, radius } => center.iter().chain(std::iter::once(radius)).collect(),
            Self::Affine { matrix, rhs } => matrix.iter().flatten().chain(rhs).collect(),
            Self::Polyhedron { rows, .. } => rows
                .iter()
                .flat_map(|r| r.normal.iter().chain(std::iter::once(&r.offset)))
                .collect(),
            Self::Singleton { point } => point.iter().collect(),
        }
    }

    pub fn max_param_index(&self) -> Option<usize> {
        self.exprs().into_iter().filter_map(ParamExpr::max_param_index).max()
    }

    /// True when no field depends on the parameter.
    pub fn is_constant(&self) -> bool {
        self.exprs().into_iter().all(ParamExpr::is_constant)
    }

    pub fn instantiate(&self, p: &[f64]) -> Result<ConvexSet, GeometryError> {
        match self {
            Self::Halfspace { normal, offset } => ConvexSet::halfspace(eval_all(normal, p), offset.eval(p)),
            Self::Box { lo, hi } => ConvexSet::boxed(eval_all(lo, p), eval_all(hi, p)),
            Self::Ball { center, radius } => ConvexSet::ball(eval_all(center, p), radius.eval(p)),
            Self::Affine { matrix, rhs } => {
                let rows: Vec<Vec<f64>> = matrix.iter().map(|r| eval_all(r, p)).collect();
                let m = Matrix::from_rows(&rows)
                    .ok_or_else(|| GeometryError::InvalidSet("affine matrix rows are ragged or empty".into()))?;
                ConvexSet::affine(m, eval_all(rhs, p))
            }
            Self::Polyhedron { rows, attested } => ConvexSet::polyhedron(
                rows.iter()
                    .map(|r| HalfspaceRow {
                        normal: eval_all(&r.normal, p),
                        offset: r.offset.eval(p),
                    })
                    .collect(),
                *attested,
            ),
            Self::Singleton { point } => ConvexSet::singleton(eval_all(point, p)),
        }
    }
}

/// Parameter-dependent matrix `A(p, ·)`, `k` rows by `n` columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LinearOpMap {
    entries: Vec<Vec<ParamExpr>>,
}

impl LinearOpMap {
    pub fn new(entries: Vec<Vec<ParamExpr>>) -> Result<Self, String> {
        let cols = entries.first().map_or(0, Vec::len);
        if cols == 0 || entries.iter().any(|r| r.len() != cols) {
            return Err("operator entries must form a nonempty rectangular matrix".into());
        }
        Ok(Self { entries })
    }

    /// 1×1 operator `x ↦ e(p)·x`.
    pub fn scalar(e: ParamExpr) -> Self {
        Self { entries: vec![vec![e]] }
    }

    pub fn constant(m: &Matrix) -> Self {
        Self {
            entries: m.to_rows().iter().map(|r| constants(r)).collect(),
        }
    }

    pub fn rows(&self) -> usize {
        self.entries.len()
    }

    pub fn cols(&self) -> usize {
        self.entries.first().map_or(0, Vec::len)
    }

    pub fn max_param_index(&self) -> Option<usize> {
        self.entries
            .iter()
            .flatten()
            .filter_map(ParamExpr::max_param_index)
            .max()
    }

    pub fn is_constant(&self) -> bool {
        self.entries.iter().flatten().all(ParamExpr::is_constant)
    }

    pub fn instantiate(&self, p: &[f64]) -> Matrix {
        let rows: Vec<Vec<f64>> = self.entries.iter().map(|r| eval_all(r, p)).collect();
        Matrix::from_rows(&rows).expect("shape checked at construction")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::family::expr::Factor::*;

    #[test]
    fn half_line_template() {
        // [p², ∞)
        let t = SetTemplate::Box {
            lo: vec![ParamExpr::monomial(1.0, &[Param(0), Param(0)])],
            hi: vec![ParamExpr::constant(f64::INFINITY)],
        };
        let s = t.instantiate(&[0.5]).unwrap();
        assert_eq!(s, ConvexSet::boxed(vec![0.25], vec![f64::INFINITY]).unwrap());
        assert!(!t.is_constant());
    }

    #[test]
    fn invalid_instance_is_reported() {
        // [p, 0] is empty for p > 0
        let t = SetTemplate::Box {
            lo: vec![ParamExpr::monomial(1.0, &[Param(0)])],
            hi: vec![ParamExpr::constant(0.0)],
        };
        assert!(t.instantiate(&[-1.0]).is_ok());
        assert!(t.instantiate(&[1.0]).is_err());
    }

    #[test]
    fn fixed_template_round_trips() {
        let s = ConvexSet::ball(vec![1.0, 2.0], 0.5).unwrap();
        assert_eq!(SetTemplate::fixed(&s).instantiate(&[9.0]).unwrap(), s);
    }

    #[test]
    fn template_json_shape() {
        let json = r#"{"kind":"box","lo":[[{"coef":1,"factors":["abs(p0)","p0","p0"]}]],"hi":["inf"]}"#;
        let t: SetTemplate = serde_json::from_str(json).unwrap();
        let s = t.instantiate(&[-0.5]).unwrap();
        assert_eq!(s, ConvexSet::boxed(vec![0.125], vec![f64::INFINITY]).unwrap());
    }
}
