//! Normal cones of canonical sets, represented by finite generator lists.

use super::{ConvexSet, GeometryError, FEAS_TOL};
use crate::linalg;
use crate::rng;

/// Options for [`normal_cone_sample`].
#[derive(Debug, Clone, Copy)]
pub struct ConeSampleOptions {
    /// A constraint counts as active when its slack is at most this.
    pub activity_tol: f64,
    /// Membership tolerance for the base point.
    pub feas_tol: f64,
    /// Scale each sample into the closed unit ball.
    pub unit_ball: bool,
}

impl Default for ConeSampleOptions {
    fn default() -> Self {
        Self {
            activity_tol: 1e-9,
            feas_tol: FEAS_TOL,
            unit_ball: false,
        }
    }
}

fn unit(dim: usize, i: usize, sign: f64) -> Vec<f64> {
    let mut e = vec![0.0; dim];
    e[i] = sign;
    e
}

fn all_directions(dim: usize) -> Vec<Vec<f64>> {
    (0..dim).flat_map(|i| [unit(dim, i, 1.0), unit(dim, i, -1.0)]).collect()
}

/// Generators of the normal cone `N(x; set)`: the cone is the set of
/// nonnegative combinations of the returned vectors. An empty list means
/// the cone is `{0}`.
///
/// `x` is assumed to lie in the set; callers outside the set should project
/// first.
pub fn normal_cone_generators(set: &ConvexSet, x: &[f64], activity_tol: f64) -> Vec<Vec<f64>> {
    let dim = set.dim();
    match set {
        ConvexSet::Halfspace { normal, offset } => {
            let slack = (offset - linalg::dot(normal, x)) / linalg::norm(normal);
            if slack <= activity_tol {
                vec![normal.clone()]
            } else {
                Vec::new()
            }
        }
        ConvexSet::Box { lo, hi } => {
            let mut gens = Vec::new();
            for i in 0..dim {
                if (x[i] - lo[i]).abs() <= activity_tol {
                    gens.push(unit(dim, i, -1.0));
                }
                if (hi[i] - x[i]).abs() <= activity_tol {
                    gens.push(unit(dim, i, 1.0));
                }
            }
            gens
        }
        ConvexSet::Ball { center, radius } => {
            if *radius == 0.0 {
                return all_directions(dim);
            }
            let d = linalg::sub(x, center);
            if (linalg::norm(&d) - radius).abs() <= activity_tol {
                vec![d]
            } else {
                Vec::new()
            }
        }
        ConvexSet::Affine { matrix, .. } => (0..matrix.rows())
            .map(|i| matrix.row(i).to_vec())
            .filter(|r| linalg::norm(r) > 0.0)
            .flat_map(|r| {
                let neg = linalg::scale(&r, -1.0);
                [r, neg]
            })
            .collect(),
        ConvexSet::Polyhedron { rows, .. } => rows
            .iter()
            .filter(|r| (r.offset - linalg::dot(&r.normal, x)) / linalg::norm(&r.normal) <= activity_tol)
            .map(|r| r.normal.clone())
            .collect(),
        ConvexSet::Singleton { .. } => all_directions(dim),
    }
}

/// Draws `count` elements of `N(x; set)`. The first element is always the
/// zero vector; the rest are random nonnegative combinations of the cone
/// generators with exponentially distributed weights.
pub fn normal_cone_sample(
    set: &ConvexSet,
    x: &[f64],
    count: usize,
    rng_seed: u64,
    opts: ConeSampleOptions,
) -> Result<Vec<Vec<f64>>, GeometryError> {
    let residual = set.residual(x)?;
    if residual > opts.feas_tol {
        return Err(GeometryError::NotInSet {
            residual,
            tol: opts.feas_tol,
        });
    }
    let dim = set.dim();
    let gens = normal_cone_generators(set, x, opts.activity_tol);
    let mut out = Vec::with_capacity(count);
    if count == 0 {
        return Ok(out);
    }
    out.push(vec![0.0; dim]);
    let mut rng = rng::rng_for(rng_seed, &[]);
    for _ in 1..count {
        let mut v = vec![0.0; dim];
        for g in &gens {
            let c = rng::exponential(&mut rng);
            for (vi, gi) in v.iter_mut().zip(g) {
                *vi += c * gi;
            }
        }
        if opts.unit_ball {
            let n = linalg::norm(&v);
            if n > 1.0 {
                v = linalg::scale(&v, 1.0 / n);
            }
        }
        out.push(v);
    }
    Ok(out)
}
