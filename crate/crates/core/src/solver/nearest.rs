//! Nearest feasible point by ADMM on
//! `min ½‖z − x‖²  s.t.  z ∈ C, A z ∈ Q`,
//! split as `z = w ∈ C`, `A z = y ∈ Q`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::family::Instance;
use crate::geometry::GeometryError;
use crate::linalg;

pub(crate) const ADMM_MAX_ITERS: usize = 5_000;
pub(crate) const ADMM_TOL: f64 = 1e-12;

fn factor(a: &DMatrix<f64>, rho: f64) -> Cholesky<f64, Dyn> {
    let n = a.ncols();
    let m = DMatrix::<f64>::identity(n, n) * (1.0 + rho) + a.transpose() * a * rho;
    Cholesky::new(m).expect("(1+ρ)I + ρAᵀA is positive definite")
}

/// Approximate projection of `x` onto `C ∩ A⁻¹(Q)`. The returned point lies
/// in `C`; its image is only approximately in `Q`.
pub(crate) fn nearest_feasible(inst: &Instance, x: &[f64]) -> Result<Vec<f64>, GeometryError> {
    let a = inst.a.to_nalgebra();
    let mut rho = 1.0;
    let mut chol = factor(&a, rho);
    let xv = DVector::from_column_slice(x);
    let mut w = inst.c.project(x)?.point;
    let mut y = inst.q.project(&inst.a.apply(x))?.point;
    let mut u = vec![0.0; x.len()];
    let mut v = vec![0.0; y.len()];
    for it in 1..=ADMM_MAX_ITERS {
        let wu = DVector::from_vec(linalg::sub(&w, &u));
        let yv = DVector::from_vec(linalg::sub(&y, &v));
        let rhs = &xv + (wu + a.transpose() * yv) * rho;
        let z: Vec<f64> = chol.solve(&rhs).iter().copied().collect();
        let az = inst.a.apply(&z);
        let w_old = std::mem::replace(&mut w, inst.c.project(&linalg::add(&z, &u))?.point);
        let y_old = std::mem::replace(&mut y, inst.q.project(&linalg::add(&az, &v))?.point);
        let rz = linalg::sub(&z, &w);
        let ry = linalg::sub(&az, &y);
        u = linalg::add(&u, &rz);
        v = linalg::add(&v, &ry);
        let r_pri = (linalg::dot(&rz, &rz) + linalg::dot(&ry, &ry)).sqrt();
        let dw = linalg::sub(&w, &w_old);
        let dy = inst.a.apply_transpose(&linalg::sub(&y, &y_old));
        let r_dual = rho * (linalg::dot(&dw, &dw) + linalg::dot(&dy, &dy)).sqrt();
        let scale = linalg::norm(x).max(1.0);
        if r_pri < ADMM_TOL * scale && r_dual < ADMM_TOL * scale {
            break;
        }
        // Residual balancing; scaled duals move inversely to ρ.
        if it % 10 == 0 {
            let factor_change = if r_pri > 10.0 * r_dual {
                2.0
            } else if r_dual > 10.0 * r_pri {
                0.5
            } else {
                1.0
            };
            if factor_change != 1.0 && (1e-6..=1e6).contains(&(rho * factor_change)) {
                rho *= factor_change;
                u = linalg::scale(&u, 1.0 / factor_change);
                v = linalg::scale(&v, 1.0 / factor_change);
                chol = factor(&a, rho);
            }
        }
    }
    Ok(w)
}
