//! Minimum norm of `b + M w` over `w` in a finitely generated cone
//! intersected with the closed unit ball.

use rand::Rng;

use crate::linalg;
use crate::rng;

pub(crate) const PG_ITERS: usize = 200;
pub(crate) const PG_RESTARTS: usize = 16;

pub(crate) fn norm_of_sum(a: &[f64], b: &[f64]) -> f64 {
    linalg::norm(&linalg::add(a, b))
}

/// `min ‖b + M w‖` over `w = Σ c_j g_j`, `c ≥ 0`, `‖w‖ ≤ 1`.
///
/// Zero and every single-generator segment are solved in closed form; with
/// two or more generators, projected gradient on the coefficients runs from
/// several random starts. Every iterate is feasible, so the result is an
/// upper bound on the true minimum that is exact in the closed-form cases.
pub(crate) fn min_over_cone<R: Rng>(
    b: &[f64],
    gens: &[Vec<f64>],
    map: impl Fn(&[f64]) -> Vec<f64>,
    rng: &mut R,
) -> f64 {
    let mut best = linalg::norm(b);
    if gens.is_empty() {
        return best;
    }
    let mapped: Vec<Vec<f64>> = gens.iter().map(|g| map(g)).collect();
    for (g, mg) in gens.iter().zip(&mapped) {
        let mm = linalg::dot(mg, mg);
        let gn = linalg::norm(g);
        if mm == 0.0 || gn == 0.0 {
            continue;
        }
        let t = (-linalg::dot(b, mg) / mm).clamp(0.0, 1.0 / gn);
        best = best.min(linalg::norm(&linalg::axpy(b, t, mg)));
    }
    if gens.len() < 2 {
        return best;
    }
    let lipschitz = 2.0 * mapped.iter().map(|m| linalg::dot(m, m)).sum::<f64>();
    if lipschitz == 0.0 {
        return best;
    }
    let combine = |c: &[f64], vs: &[Vec<f64>], base: &[f64]| -> Vec<f64> {
        let mut out = base.to_vec();
        for (cj, v) in c.iter().zip(vs) {
            if *cj != 0.0 {
                for (o, vi) in out.iter_mut().zip(v) {
                    *o += cj * vi;
                }
            }
        }
        out
    };
    let zero = vec![0.0; gens[0].len()];
    let retract = |c: &mut Vec<f64>| {
        for cj in c.iter_mut() {
            *cj = cj.max(0.0);
        }
        let wn = linalg::norm(&combine(c, gens, &zero));
        if wn > 1.0 {
            for cj in c.iter_mut() {
                *cj /= wn;
            }
        }
    };
    for _ in 0..PG_RESTARTS {
        let mut c: Vec<f64> = (0..gens.len()).map(|_| rng::exponential(rng)).collect();
        retract(&mut c);
        for _ in 0..PG_ITERS {
            let r = combine(&c, &mapped, b);
            best = best.min(linalg::norm(&r));
            for (cj, mg) in c.iter_mut().zip(&mapped) {
                *cj -= 2.0 * linalg::dot(&r, mg) / lipschitz;
            }
            retract(&mut c);
        }
        best = best.min(linalg::norm(&combine(&c, &mapped, b)));
    }
    best
}
