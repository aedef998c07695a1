//! Dykstra's alternating projection onto an intersection of halfspaces.

use super::{GeometryError, HalfspaceRow, DYKSTRA_MAX_SWEEPS, DYKSTRA_STEP_TOL};
use crate::linalg;
use nalgebra::{DMatrix, DVector};

const MEMBERSHIP_TOL: f64 = 1e-10;
/// Acceptance thresholds of the active-set polish.
const POLISH_FEAS_TOL: f64 = 1e-13;
const POLISH_MULTIPLIER_TOL: f64 = 1e-12;

fn project_row(row: &HalfspaceRow, y: &[f64]) -> Vec<f64> {
    let excess = linalg::dot(&row.normal, y) - row.offset;
    if excess <= 0.0 {
        y.to_vec()
    } else {
        linalg::axpy(y, -excess / linalg::dot(&row.normal, &row.normal), &row.normal)
    }
}

fn max_violation(rows: &[HalfspaceRow], z: &[f64]) -> f64 {
    rows.iter()
        .map(|r| ((linalg::dot(&r.normal, z) - r.offset) / linalg::norm(&r.normal)).max(0.0))
        .fold(0.0, f64::max)
}

pub(super) fn project(rows: &[HalfspaceRow], x: &[f64]) -> Result<Vec<f64>, GeometryError> {
    if max_violation(rows, x) == 0.0 {
        return Ok(x.to_vec());
    }
    if rows.len() == 1 {
        return Ok(project_row(&rows[0], x));
    }
    let mut z = x.to_vec();
    let mut increments = vec![vec![0.0; x.len()]; rows.len()];
    let mut residual = f64::INFINITY;
    for sweep in 1..=DYKSTRA_MAX_SWEEPS {
        let prev = z.clone();
        for (row, inc) in rows.iter().zip(increments.iter_mut()) {
            let y = linalg::add(&z, inc);
            let pz = project_row(row, &y);
            *inc = linalg::sub(&y, &pz);
            z = pz;
        }
        let change = linalg::dist(&z, &prev);
        if change < DYKSTRA_STEP_TOL * linalg::norm(x).max(1.0) {
            residual = max_violation(rows, &z);
            if residual <= MEMBERSHIP_TOL {
                return Ok(polish(rows, &increments, x).unwrap_or(z));
            }
        }
        if !linalg::all_finite(&z) {
            return Err(GeometryError::NotConverged {
                iterations: sweep,
                residual: f64::INFINITY,
                last_iterate: z,
            });
        }
    }
    if residual.is_infinite() {
        residual = max_violation(rows, &z);
    }
    Err(GeometryError::NotConverged {
        iterations: DYKSTRA_MAX_SWEEPS,
        residual,
        last_iterate: z,
    })
}

/// Exact projection onto the rows Dykstra left with nonzero increments,
/// treated as equalities: `z = x − Nᵀλ` with `N Nᵀ λ = N x − b`. Accepted
/// only when the multipliers are nonnegative and `z` is feasible, in which
/// case the KKT conditions certify it as the projection.
fn polish(rows: &[HalfspaceRow], increments: &[Vec<f64>], x: &[f64]) -> Option<Vec<f64>> {
    let active: Vec<&HalfspaceRow> = rows
        .iter()
        .zip(increments)
        .filter(|(_, inc)| linalg::norm(inc) > 0.0)
        .map(|(r, _)| r)
        .collect();
    if active.is_empty() {
        return None;
    }
    let n = x.len();
    let k = active.len();
    let nm = DMatrix::from_fn(k, n, |i, j| active[i].normal[j]);
    let xv = DVector::from_column_slice(x);
    let b = DVector::from_fn(k, |i, _| active[i].offset);
    let gram = &nm * nm.transpose();
    let rhs = &nm * &xv - b;
    let lambda = gram.svd(true, true).solve(&rhs, 1e-14).ok()?;
    if lambda.iter().any(|l| *l < -POLISH_MULTIPLIER_TOL || !l.is_finite()) {
        return None;
    }
    let z: Vec<f64> = (xv - nm.transpose() * lambda).iter().copied().collect();
    let scale = linalg::norm(x).max(1.0);
    (max_violation(rows, &z) <= POLISH_FEAS_TOL * scale).then_some(z)
}
