//! Proximal-point start: the point nearest the user's guess that satisfies the
//! bounds and the linear rows.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::augmented::{solve_linear_al, AlSettings};
use super::InnerError;
use crate::model::{Bounds, ModelError, SlackForm};

/// Loose optimality tolerance for the start problem.
pub const PROXIMAL_TOL: f64 = 1e-2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProximalVariant {
    /// One-norm deviation, split as `x - x_tilde = p - q`.
    PP1,
    /// Euclidean deviation `1/2 ||x - x_tilde||^2`.
    PP2,
}

/// Returns an extended point `(x, s_c, s_A)` with `x` within bounds, the
/// linear rows satisfied to `feas_tol` and `s_c` set to `c(x)` projected onto
/// its bounds.
pub fn solve_proximal(
    sf: &SlackForm,
    x_tilde: &DVector<f64>,
    variant: ProximalVariant,
    tol: f64,
    feas_tol: f64,
) -> Result<DVector<f64>, InnerError> {
    let p = sf.problem();
    let (n, m_a) = (p.n(), p.m_a());
    let x0 = p.bounds_x().project(x_tilde);

    let (x, s_a) = if m_a == 0 {
        (x0, DVector::zeros(0))
    } else {
        let a = p.linear();
        let settings = AlSettings {
            omega: tol,
            feas_tol,
            rho_init: 10.0,
            rho_growth: 10.0,
            max_inner_iters: 5000,
            max_restarts: 3,
            unbounded_objective: -1e15,
            unbounded_norm: 1e10,
        };
        let s0 = p.bounds_a().project(&(a * &x0));
        match variant {
            ProximalVariant::PP2 => {
                // u = (x, s_A);  A x - s_A = 0
                let mut e = DMatrix::zeros(m_a, n + m_a);
                e.view_mut((0, 0), (m_a, n)).copy_from(a);
                e.view_mut((0, n), (m_a, m_a)).fill_with_identity();
                e.view_mut((0, n), (m_a, m_a)).neg_mut();
                let bounds = Bounds::stack(&[p.bounds_x(), p.bounds_a()]);
                let start = stack(&[&x0, &s0]);
                let phi = |u: &DVector<f64>| -> Result<(f64, DVector<f64>), ModelError> {
                    let d = u.rows(0, n) - x_tilde;
                    let mut g = DVector::zeros(n + m_a);
                    g.rows_mut(0, n).copy_from(&d);
                    Ok((0.5 * d.norm_squared(), g))
                };
                let out = solve_linear_al(phi, &e, &DVector::zeros(m_a), &bounds, &start, &DVector::zeros(m_a), &settings)?;
                if out.residual_norm > feas_tol {
                    return Err(InnerError::PpInfeasible {
                        residual: out.residual_norm,
                    });
                }
                (out.u.rows(0, n).into_owned(), out.u.rows(n, m_a).into_owned())
            }
            ProximalVariant::PP1 => {
                // u = (x, p, q, s_A);  x - p + q = x_tilde,  A x - s_A = 0
                let len = 3 * n + m_a;
                let mut e = DMatrix::zeros(n + m_a, len);
                e.view_mut((0, 0), (n, n)).fill_with_identity();
                for i in 0..n {
                    e[(i, n + i)] = -1.0;
                    e[(i, 2 * n + i)] = 1.0;
                }
                e.view_mut((n, 0), (m_a, n)).copy_from(a);
                for i in 0..m_a {
                    e[(n + i, 3 * n + i)] = -1.0;
                }
                let rhs = stack(&[x_tilde, &DVector::zeros(m_a)]);
                let bounds = Bounds::stack(&[p.bounds_x(), &Bounds::nonnegative(2 * n), p.bounds_a()]);
                let dev = &x0 - x_tilde;
                let start = stack(&[&x0, &dev.map(|d| d.max(0.0)), &dev.map(|d| (-d).max(0.0)), &s0]);
                let mut grad = DVector::zeros(len);
                grad.rows_mut(n, 2 * n).fill(1.0);
                let phi = |u: &DVector<f64>| -> Result<(f64, DVector<f64>), ModelError> { Ok((u.rows(n, 2 * n).sum(), grad.clone())) };
                let out = solve_linear_al(phi, &e, &rhs, &bounds, &start, &DVector::zeros(n + m_a), &settings)?;
                if out.residual_norm > feas_tol {
                    return Err(InnerError::PpInfeasible {
                        residual: out.residual_norm,
                    });
                }
                (out.u.rows(0, n).into_owned(), out.u.rows(3 * n, m_a).into_owned())
            }
        }
    };

    let s_c = p.bounds_c().project(&p.eval_c(&x));
    Ok(sf.join(&x, &s_c, &s_a))
}

fn stack(parts: &[&DVector<f64>]) -> DVector<f64> {
    DVector::from_iterator(parts.iter().map(|p| p.len()).sum(), parts.iter().flat_map(|p| p.iter().copied()))
}
