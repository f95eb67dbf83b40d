//! Bound-constrained augmented Lagrangian loop for
//! `min phi(u)  s.t.  E u = b,  l <= u <= h`.
//!
//! Each round minimizes `phi - mu'(Eu - b) + rho/2 ||Eu - b||^2` over the box
//! with [`bound_solve`] and then takes the first-order step on `mu`.

use nalgebra::{DMatrix, DVector};

use super::spg::{bound_solve, BoundSolveOptions, BoundStatus};
use crate::model::{Bounds, ModelError};

/// Penalty beyond which a stagnant residual is taken as infeasibility.
const RHO_CAP: f64 = 1e12;

#[derive(Debug, Clone)]
pub(crate) struct AlSettings {
    pub omega: f64,
    pub feas_tol: f64,
    pub rho_init: f64,
    pub rho_growth: f64,
    pub max_inner_iters: usize,
    pub max_restarts: usize,
    pub unbounded_objective: f64,
    pub unbounded_norm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum AlStatus {
    Converged,
    Unbounded,
    IterationLimit,
    /// The residual stayed above `feas_tol` with the penalty at its cap.
    Infeasible,
}

#[derive(Debug, Clone)]
pub(crate) struct AlOutcome {
    pub u: DVector<f64>,
    /// Multiplier estimate paired with `u` (the first-order update of the last round).
    pub mu: DVector<f64>,
    pub status: AlStatus,
    pub iterations: usize,
    pub residual_norm: f64,
}

pub(crate) fn solve_linear_al<F>(
    mut phi: F,
    matrix: &DMatrix<f64>,
    rhs: &DVector<f64>,
    bounds: &Bounds,
    start: &DVector<f64>,
    mu0: &DVector<f64>,
    settings: &AlSettings,
) -> Result<AlOutcome, ModelError>
where
    F: FnMut(&DVector<f64>) -> Result<(f64, DVector<f64>), ModelError>,
{
    let budget = settings.max_restarts.max(1) * settings.max_inner_iters;
    let mut u = bounds.project(start);
    let mut mu = mu0.clone();
    let mut rho = settings.rho_init;
    let mut prev_residual = f64::INFINITY;
    let mut used = 0;
    let mut restarts = 0;

    loop {
        let bs_opts = BoundSolveOptions {
            tol: settings.omega,
            max_iters: settings.max_inner_iters.min(budget - used).max(1),
            unbounded_objective: settings.unbounded_objective,
            unbounded_norm: settings.unbounded_norm,
            ..Default::default()
        };
        let mu_round = mu.clone();
        let psi = |point: &DVector<f64>| -> Result<(f64, DVector<f64>), ModelError> {
            let (value, grad) = phi(point)?;
            let r = matrix * point - rhs;
            let shifted = &mu_round - &r * rho;
            let value = value - mu_round.dot(&r) + 0.5 * rho * r.norm_squared();
            Ok((value, grad - matrix.tr_mul(&shifted)))
        };
        let result = bound_solve(psi, bounds, &u, &bs_opts)?;
        used += result.iterations.max(1);
        u = result.x;

        let r = matrix * &u - rhs;
        let residual_norm = r.amax();
        let mu_next = &mu - &r * rho;

        let outcome = |u: DVector<f64>, mu: DVector<f64>, status| AlOutcome {
            u,
            mu,
            status,
            iterations: used,
            residual_norm,
        };

        match result.status {
            BoundStatus::Unbounded => return Ok(outcome(u, mu_next, AlStatus::Unbounded)),
            BoundStatus::Converged => {
                if residual_norm <= settings.feas_tol {
                    return Ok(outcome(u, mu_next, AlStatus::Converged));
                }
                if rho >= RHO_CAP && residual_norm > 0.5 * prev_residual {
                    return Ok(outcome(u, mu_next, AlStatus::Infeasible));
                }
                mu = mu_next;
                if residual_norm > 0.1 * prev_residual {
                    rho = (rho * settings.rho_growth).min(RHO_CAP);
                }
                prev_residual = residual_norm;
            }
            BoundStatus::IterationLimit | BoundStatus::Stalled => {
                // warm restart on the same round
                restarts += 1;
                if restarts > settings.max_restarts {
                    return Ok(outcome(u, mu_next, AlStatus::IterationLimit));
                }
            }
        }
        if used >= budget {
            return Ok(AlOutcome {
                u,
                mu,
                status: AlStatus::IterationLimit,
                iterations: used,
                residual_norm,
            });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn settings(omega: f64) -> AlSettings {
        AlSettings {
            omega,
            feas_tol: 1e-9,
            rho_init: 10.0,
            rho_growth: 10.0,
            max_inner_iters: 5000,
            max_restarts: 3,
            unbounded_objective: -1e15,
            unbounded_norm: 1e10,
        }
    }

    #[test]
    fn equality_constrained_qp() {
        // min x1^2 + x2^2 s.t. x1 + x2 = 2: x = (1, 1), mu = 2
        let phi = |x: &DVector<f64>| -> Result<(f64, DVector<f64>), ModelError> { Ok((x.norm_squared(), x * 2.0)) };
        let e = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        let b = DVector::from_vec(vec![2.0]);
        let out = solve_linear_al(phi, &e, &b, &Bounds::nonnegative(2), &DVector::zeros(2), &DVector::zeros(1), &settings(1e-10)).unwrap();
        assert_eq!(out.status, AlStatus::Converged);
        assert!((out.u[0] - 1.0).abs() < 1e-8 && (out.u[1] - 1.0).abs() < 1e-8);
        assert!((out.mu[0] - 2.0).abs() < 1e-7);
    }

    #[test]
    fn infeasible_rows_detected() {
        let phi = |x: &DVector<f64>| -> Result<(f64, DVector<f64>), ModelError> { Ok((0.0, DVector::zeros(x.len()))) };
        let e = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        let b = DVector::from_vec(vec![10.0]);
        let bounds = Bounds::from_vecs(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        let out = solve_linear_al(phi, &e, &b, &bounds, &DVector::zeros(2), &DVector::zeros(1), &settings(1e-6)).unwrap();
        assert_eq!(out.status, AlStatus::Infeasible);
        assert!((out.residual_norm - 8.0).abs() < 1e-6);
    }
}
