//! Spectral projected gradient with a nonmonotone (GLL) backtracking search,
//! optionally preceded at each iteration by a projected quasi-Newton step on
//! the variables away from their bounds.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::model::{Bounds, ModelError};

const STEP_MIN: f64 = 1e-10;
const STEP_MAX: f64 = 1e10;
const MIN_BACKTRACK: f64 = 1e-18;

#[derive(Debug, Clone, PartialEq)]
pub struct BoundSolveOptions {
    /// Target for the infinity norm of the projected gradient.
    pub tol: f64,
    pub max_iters: usize,
    pub unbounded_objective: f64,
    pub unbounded_norm: f64,
    /// Number of past values in the nonmonotone reference.
    pub memory: usize,
    pub sufficient_decrease: f64,
    pub backtrack: f64,
    /// Try a dense BFGS step on the free variables before the spectral step.
    pub quasi_newton: bool,
}

impl Default for BoundSolveOptions {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_iters: 5000,
            unbounded_objective: -1e15,
            unbounded_norm: 1e10,
            memory: 10,
            sufficient_decrease: 1e-4,
            backtrack: 0.5,
            quasi_newton: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum BoundStatus {
    Converged,
    Unbounded,
    IterationLimit,
    /// The line search could not make progress; the point is returned as is.
    Stalled,
}

#[derive(Debug, Clone)]
pub struct BoundSolveResult {
    pub x: DVector<f64>,
    pub f: f64,
    pub grad: DVector<f64>,
    pub pg_norm: f64,
    pub status: BoundStatus,
    pub iterations: usize,
    pub evaluations: usize,
}

/// `P(x - g) - x`: the gradient step clipped to the box.
pub fn projected_gradient(x: &DVector<f64>, g: &DVector<f64>, bounds: &Bounds) -> DVector<f64> {
    bounds.project(&(x - g)) - x
}

/// Minimize a smooth function over a box.
///
/// The objective returns its value and gradient. An error at a trial point is
/// treated as an infinite value; an error at the start point is returned.
pub fn bound_solve<F>(
    mut objective: F,
    bounds: &Bounds,
    start: &DVector<f64>,
    opts: &BoundSolveOptions,
) -> Result<BoundSolveResult, ModelError>
where
    F: FnMut(&DVector<f64>) -> Result<(f64, DVector<f64>), ModelError>,
{
    let mut x = bounds.project(start);
    let (mut f, mut g) = objective(&x)?;
    if !f.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return Err(ModelError::NonFinite("objective at start point"));
    }
    let mut evaluations = 1;
    let mut history: VecDeque<f64> = VecDeque::with_capacity(opts.memory.max(1));
    history.push_back(f);

    let mut pg = projected_gradient(&x, &g, bounds);
    let mut pg_norm = pg.amax();
    let mut step = if pg_norm > 0.0 {
        (1.0 / pg_norm).clamp(STEP_MIN, STEP_MAX)
    } else {
        1.0
    };

    let finish = |x, f, grad, pg_norm, status, iterations, evaluations| BoundSolveResult {
        x,
        f,
        grad,
        pg_norm,
        status,
        iterations,
        evaluations,
    };

    let mut hess = opts.quasi_newton.then(|| DMatrix::<f64>::identity(x.len(), x.len()));
    let mut iter = 0;
    let mut best = f;
    let mut since_best = 0;
    let mut qn_pause = 0;
    loop {
        if pg_norm <= opts.tol {
            return Ok(finish(x, f, g, pg_norm, BoundStatus::Converged, iter, evaluations));
        }
        if iter >= opts.max_iters {
            return Ok(finish(x, f, g, pg_norm, BoundStatus::IterationLimit, iter, evaluations));
        }
        iter += 1;

        if f < best - STALL_REL_DECREASE * (1.0 + best.abs()) {
            best = f;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best > STALL_WINDOW {
                return Ok(finish(x, f, g, pg_norm, BoundStatus::Stalled, iter, evaluations));
            }
        }

        if let (Some(h), 0) = (hess.as_ref(), qn_pause) {
            let eps = pg_norm.min(1e-3);
            let attempt = qn_step(&mut objective, bounds, &x, f, &g, h, eps, opts);
            evaluations += match &attempt {
                Ok(t) => t.3,
                Err(used) => *used,
            };
            if let Ok((x_new, f_new, g_new, _)) = attempt {
                if f_new < opts.unbounded_objective || x_new.amax() > opts.unbounded_norm {
                    let pg_new = projected_gradient(&x_new, &g_new, bounds).amax();
                    return Ok(finish(x_new, f_new, g_new, pg_new, BoundStatus::Unbounded, iter, evaluations));
                }
                let s = &x_new - &x;
                let y = &g_new - &g;
                if let Some(h) = hess.as_mut() {
                    bfgs_update(h, &s, &y);
                }
                let sy = s.dot(&y);
                step = if sy <= 0.0 { STEP_MAX } else { (s.norm_squared() / sy).clamp(STEP_MIN, STEP_MAX) };
                x = x_new;
                f = f_new;
                g = g_new;
                if history.len() == opts.memory.max(1) {
                    history.pop_front();
                }
                history.push_back(f);
                pg = projected_gradient(&x, &g, bounds);
                pg_norm = pg.amax();
                continue;
            }
            qn_pause = QN_PAUSE;
            if let Some(h) = hess.as_mut() {
                h.fill_with_identity();
            }
        }
        qn_pause = qn_pause.saturating_sub(1);

        let mut d = bounds.project(&(&x - &g * step)) - &x;
        let mut gtd = g.dot(&d);
        if gtd >= 0.0 {
            // spectral step lost descent to roundoff; fall back to the unit projected step
            d = pg.clone();
            gtd = g.dot(&d);
            if gtd >= 0.0 {
                return Ok(finish(x, f, g, pg_norm, BoundStatus::Stalled, iter, evaluations));
            }
        }

        let f_ref = history.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut t = 1.0;
        let accepted = loop {
            let trial = bounds.project(&(&x + &d * t));
            evaluations += 1;
            if let Ok((ft, gt)) = objective(&trial) {
                if ft.is_finite() && gt.iter().all(|v| v.is_finite()) && ft <= f_ref + opts.sufficient_decrease * t * gtd {
                    break Some((trial, ft, gt));
                }
            }
            t *= opts.backtrack;
            if t < MIN_BACKTRACK {
                break None;
            }
        };
        let Some((x_new, f_new, g_new)) = accepted else {
            return Ok(finish(x, f, g, pg_norm, BoundStatus::Stalled, iter, evaluations));
        };

        let decreasing = f_new < f;
        if f_new < opts.unbounded_objective || (decreasing && x_new.amax() > opts.unbounded_norm) {
            let pg_new = projected_gradient(&x_new, &g_new, bounds).amax();
            return Ok(finish(x_new, f_new, g_new, pg_new, BoundStatus::Unbounded, iter, evaluations));
        }

        let s = &x_new - &x;
        let y = &g_new - &g;
        if let Some(h) = hess.as_mut() {
            bfgs_update(h, &s, &y);
        }
        let sy = s.dot(&y);
        step = if sy <= 0.0 {
            STEP_MAX
        } else {
            (s.norm_squared() / sy).clamp(STEP_MIN, STEP_MAX)
        };

        x = x_new;
        f = f_new;
        g = g_new;
        if history.len() == opts.memory.max(1) {
            history.pop_front();
        }
        history.push_back(f);
        pg = projected_gradient(&x, &g, bounds);
        pg_norm = pg.amax();
    }
}

const QN_MAX_BACKTRACKS: usize = 30;
/// Spectral iterations between a failed quasi-Newton step and the next try.
const QN_PAUSE: usize = 5;
/// Iterations without a relative decrease of the best value before giving up.
const STALL_WINDOW: usize = 200;
const STALL_REL_DECREASE: f64 = 1e-15;

/// Projected quasi-Newton step: Newton direction from `h` on the variables not
/// held at a bound, steepest descent on the rest, Armijo search along the
/// projected path. On failure returns the number of evaluations spent.
#[allow(clippy::too_many_arguments)]
fn qn_step<F>(
    objective: &mut F,
    bounds: &Bounds,
    x: &DVector<f64>,
    f: f64,
    g: &DVector<f64>,
    h: &DMatrix<f64>,
    eps: f64,
    opts: &BoundSolveOptions,
) -> Result<(DVector<f64>, f64, DVector<f64>, usize), usize>
where
    F: FnMut(&DVector<f64>) -> Result<(f64, DVector<f64>), ModelError>,
{
    let n = x.len();
    let free: Vec<usize> = (0..n)
        .filter(|&j| {
            let (l, u) = (bounds.lower[j], bounds.upper[j]);
            let at_lower = x[j] - l <= eps && g[j] > 0.0;
            let at_upper = u - x[j] <= eps && g[j] < 0.0;
            l < u && !at_lower && !at_upper
        })
        .collect();
    if free.is_empty() {
        return Err(0);
    }
    let hf = DMatrix::from_fn(free.len(), free.len(), |a, b| h[(free[a], free[b])]);
    let gf = DVector::from_iterator(free.len(), free.iter().map(|&j| g[j]));
    let Some(chol) = hf.cholesky() else { return Err(0) };
    let df = chol.solve(&(-gf));
    let mut d = DVector::zeros(n);
    for (j, &gj) in g.iter().enumerate() {
        d[j] = -gj / h[(j, j)].max(1e-12);
    }
    for (a, &j) in free.iter().enumerate() {
        d[j] = df[a];
    }

    let mut t = 1.0;
    let mut used = 0;
    while used < QN_MAX_BACKTRACKS {
        let trial = bounds.project(&(x + &d * t));
        let gtd = g.dot(&(&trial - x));
        if gtd >= 0.0 {
            t *= opts.backtrack;
            if t < MIN_BACKTRACK {
                break;
            }
            continue;
        }
        used += 1;
        if let Ok((ft, gt)) = objective(&trial) {
            if ft.is_finite() && gt.iter().all(|v| v.is_finite()) && ft <= f + opts.sufficient_decrease * gtd {
                return Ok((trial, ft, gt, used));
            }
        }
        t *= opts.backtrack;
        if t < MIN_BACKTRACK {
            break;
        }
    }
    Err(used)
}

/// Damped BFGS update of the Hessian approximation.
fn bfgs_update(h: &mut DMatrix<f64>, s: &DVector<f64>, y: &DVector<f64>) {
    let hs = &*h * s;
    let shs = s.dot(&hs);
    if shs <= 1e-300 || !shs.is_finite() {
        return;
    }
    let sy = s.dot(y);
    let r = if sy >= 0.2 * shs {
        y.clone()
    } else {
        let theta = 0.8 * shs / (shs - sy);
        y * theta + &hs * (1.0 - theta)
    };
    let sr = s.dot(&r);
    if sr <= 1e-300 {
        return;
    }
    *h += &r * r.transpose() / sr - &hs * hs.transpose() / shs;
    if h.iter().any(|v| !v.is_finite()) {
        h.fill_with_identity();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(xs)
    }

    fn dist_sq(a: DVector<f64>) -> impl FnMut(&DVector<f64>) -> Result<(f64, DVector<f64>), ModelError> {
        move |x| {
            let d = x - &a;
            Ok((d.norm_squared(), d * 2.0))
        }
    }

    #[test]
    fn clipped_scalar_minimizer() {
        let b = Bounds::from_vecs(vec![0.0], vec![2.0]).unwrap();
        let r = bound_solve(dist_sq(v(&[3.0])), &b, &v(&[0.0]), &BoundSolveOptions::default()).unwrap();
        assert_eq!(r.status, BoundStatus::Converged);
        assert!((r.x[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn componentwise_projection() {
        let b = Bounds::nonnegative(2);
        let r = bound_solve(dist_sq(v(&[-1.0, 5.0])), &b, &v(&[1.0, 1.0]), &BoundSolveOptions::default()).unwrap();
        assert_eq!(r.status, BoundStatus::Converged);
        assert!((r.x - v(&[0.0, 5.0])).amax() < 1e-6);
    }

    #[test]
    fn interior_minimizer() {
        let b = Bounds::from_vecs(vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap();
        let r = bound_solve(dist_sq(v(&[0.0, 0.0])), &b, &v(&[1.0, 1.0]), &BoundSolveOptions::default()).unwrap();
        assert_eq!(r.status, BoundStatus::Converged);
        assert!(r.x.amax() < 1e-8);
        assert!(r.pg_norm <= 1e-6);
    }

    #[test]
    fn ill_conditioned_quadratic() {
        let b = Bounds::from_vecs(vec![-1.0, 47.0], vec![f64::INFINITY, f64::INFINITY]).unwrap();
        let gamma = 1e4;
        let obj = move |x: &DVector<f64>| -> Result<(f64, DVector<f64>), ModelError> {
            Ok((0.5 * (x[0] * x[0] + gamma * x[1] * x[1]), v(&[x[0], gamma * x[1]])))
        };
        let opts = BoundSolveOptions {
            tol: 1e-9,
            ..Default::default()
        };
        let r = bound_solve(obj, &b, &v(&[180.0, 152.0]), &opts).unwrap();
        assert_eq!(r.status, BoundStatus::Converged);
        assert!((r.x - v(&[0.0, 47.0])).amax() < 1e-8);
    }

    #[test]
    fn linear_descent_ray_is_unbounded() {
        let b = Bounds::nonnegative(2);
        let obj = |x: &DVector<f64>| -> Result<(f64, DVector<f64>), ModelError> { Ok((-x[0], v(&[-1.0, 0.0]))) };
        let r = bound_solve(obj, &b, &v(&[1.0, 0.0]), &BoundSolveOptions::default()).unwrap();
        assert_eq!(r.status, BoundStatus::Unbounded);
    }

    #[test]
    fn iteration_cap() {
        let b = Bounds::free(2);
        let rosen = |x: &DVector<f64>| -> Result<(f64, DVector<f64>), ModelError> {
            let f = 100.0 * (x[1] - x[0] * x[0]).powi(2) + (1.0 - x[0]).powi(2);
            let g = v(&[
                -400.0 * x[0] * (x[1] - x[0] * x[0]) - 2.0 * (1.0 - x[0]),
                200.0 * (x[1] - x[0] * x[0]),
            ]);
            Ok((f, g))
        };
        let opts = BoundSolveOptions {
            max_iters: 3,
            ..Default::default()
        };
        let r = bound_solve(rosen, &b, &v(&[-1.2, 1.0]), &opts).unwrap();
        assert_eq!(r.status, BoundStatus::IterationLimit);
        assert_eq!(r.iterations, 3);
    }

    #[test]
    fn non_finite_trial_points_backtrack() {
        // log barrier style objective undefined for x <= 0
        let b = Bounds::free(1);
        let obj = |x: &DVector<f64>| -> Result<(f64, DVector<f64>), ModelError> {
            if x[0] <= 0.0 {
                return Err(ModelError::NonFinite("objective"));
            }
            Ok((x[0] - x[0].ln(), v(&[1.0 - 1.0 / x[0]])))
        };
        let r = bound_solve(obj, &b, &v(&[0.05]), &BoundSolveOptions::default()).unwrap();
        assert_eq!(r.status, BoundStatus::Converged);
        assert!((r.x[0] - 1.0).abs() < 1e-5);
    }
}
