//! Solver for the elastic linearly constrained subproblems and for the
//! proximal-point start.
//!
//! The lifted problem has only linear equality rows and a box, so it is solved
//! by an augmented Lagrangian loop on those rows whose bound-constrained
//! subproblems go to a spectral projected gradient kernel.

mod augmented;
mod proximal;
mod spg;

use nalgebra::DVector;
use serde::Serialize;
use thiserror::Error;

use crate::linearize::ElasticSubproblem;
use crate::merit::comp_norm;
use crate::model::ModelError;

use augmented::{solve_linear_al, AlSettings, AlStatus};

pub use proximal::{solve_proximal, ProximalVariant, PROXIMAL_TOL};
pub use spg::{bound_solve, projected_gradient, BoundSolveOptions, BoundSolveResult, BoundStatus};

#[derive(Error, Debug, Clone, PartialEq)]
pub enum InnerError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("bounds and linear constraints are infeasible (residual {residual:e})")]
    PpInfeasible { residual: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum InnerStatus {
    Converged,
    Unbounded,
    IterationLimit,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InnerOptions {
    pub omega: f64,
    /// Tolerance on the linearized constraints.
    pub delta_lin: f64,
    pub max_inner_iters: usize,
    pub max_restarts: usize,
    pub unbounded_objective: f64,
    pub unbounded_norm: f64,
    pub al_rho_init: f64,
    pub al_rho_growth: f64,
}

impl Default for InnerOptions {
    fn default() -> Self {
        Self {
            omega: 1e-6,
            delta_lin: 1e-6,
            max_inner_iters: 5000,
            max_restarts: 3,
            unbounded_objective: -1e15,
            unbounded_norm: 1e10,
            al_rho_init: 10.0,
            al_rho_growth: 10.0,
        }
    }
}

impl InnerOptions {
    fn al_settings(&self, omega: f64, feas_tol: f64) -> AlSettings {
        AlSettings {
            omega,
            feas_tol,
            rho_init: self.al_rho_init,
            rho_growth: self.al_rho_growth,
            max_inner_iters: self.max_inner_iters,
            max_restarts: self.max_restarts,
            unbounded_objective: self.unbounded_objective,
            unbounded_norm: self.unbounded_norm,
        }
    }
}

/// Result of one subproblem solve.
#[derive(Debug, Clone)]
pub struct SubproblemSolution {
    pub x_star: DVector<f64>,
    pub delta_y: DVector<f64>,
    pub z_star: DVector<f64>,
    pub v_star: DVector<f64>,
    pub w_star: DVector<f64>,
    pub status: InnerStatus,
    pub inner_iterations: usize,
    pub function_evals: usize,
}

impl SubproblemSolution {
    /// `||dy||_inf` over the elastic rows only.
    pub fn elastic_delta_y_norm(&self, sub: &ElasticSubproblem) -> f64 {
        self.delta_y
            .iter()
            .zip(sub.elastic_rows())
            .filter(|(_, &e)| e)
            .map(|(d, _)| d.abs())
            .fold(0.0, f64::max)
    }

    /// `||v||_inf + ||w||_inf`.
    pub fn elastic_norm(&self) -> f64 {
        self.v_star.amax() + self.w_star.amax()
    }
}

/// Solve the elastic subproblem to optimality tolerance `opts.omega`.
///
/// The returned `z_star` is the reduced cost on `x_ext`, defined from the
/// returned multipliers. Elastic-row multipliers are clipped to
/// `sigma + omega` when the raw estimate exceeds it.
pub fn solve_lc(
    sub: &ElasticSubproblem,
    opts: &InnerOptions,
    warm_start: Option<&SubproblemSolution>,
) -> Result<SubproblemSolution, ModelError> {
    let dims = sub.dims;
    let x_start = match warm_start {
        Some(w) if w.x_star.len() == dims.n_ext => sub.slack_form().bounds().project(&w.x_star),
        _ => sub.lin.x_k.clone(),
    };
    let start = sub.lift_with_optimal_elastics(&x_start);
    let mu0 = match warm_start {
        Some(w) if w.delta_y.len() == dims.m => w.delta_y.clone(),
        _ => DVector::zeros(dims.m),
    };

    let mut evals = 0usize;
    let phi = |u: &DVector<f64>| {
        evals += 1;
        sub.objective(u)
    };
    let settings = opts.al_settings(opts.omega, 0.1 * opts.delta_lin);
    let out = solve_linear_al(phi, sub.constraint_matrix(), &sub.rhs(), sub.bounds(), &start, &mu0, &settings)?;

    let status = match out.status {
        AlStatus::Converged => InnerStatus::Converged,
        AlStatus::Unbounded => InnerStatus::Unbounded,
        AlStatus::IterationLimit | AlStatus::Infeasible => InnerStatus::IterationLimit,
    };

    let mut delta_y = out.mu;
    let cap = sub.sigma_k + opts.omega;
    for (d, &elastic) in delta_y.iter_mut().zip(sub.elastic_rows()) {
        if elastic {
            *d = d.clamp(-cap, cap);
        }
    }

    let u = out.u;
    let (_, grad) = sub.objective(&u)?;
    evals += 1;
    let z_lifted = grad - sub.constraint_matrix().tr_mul(&delta_y);

    Ok(SubproblemSolution {
        x_star: sub.x_part(&u),
        z_star: z_lifted.rows(0, dims.n_ext).into_owned(),
        v_star: sub.v_part(&u),
        w_star: sub.w_part(&u),
        delta_y,
        status,
        inner_iterations: out.iterations,
        function_evals: evals,
    })
}

/// Check the relaxed subproblem optimality conditions at `sol`:
/// bounds, linearized rows within `delta_lin`, the reduced-cost definition,
/// complementarity within `omega` and `||dy||_inf <= sigma + omega`.
pub fn verify_relaxed_kkt(sub: &ElasticSubproblem, sol: &SubproblemSolution, omega: f64, delta_lin: f64) -> bool {
    let u = sub.lift(&sol.x_star, &sol.v_star, &sol.w_star);
    if sub.bounds().violation(&u) > 0.0 {
        return false;
    }
    if sub.residual(&u).amax() > delta_lin {
        return false;
    }
    let Ok((_, grad)) = sub.objective(&u) else {
        return false;
    };
    let z_lifted = grad - sub.constraint_matrix().tr_mul(&sol.delta_y);
    let z_x = z_lifted.rows(0, sub.dims.n_ext);
    let scale = 1.0 + z_x.amax();
    if (z_x - &sol.z_star).amax() > 1e-10 * scale {
        return false;
    }
    if comp_norm(&u, &z_lifted, sub.bounds()) > omega {
        return false;
    }
    sol.elastic_delta_y_norm(sub) <= sub.sigma_k + omega
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linearize::{assemble_elastic, linearize_constraints};
    use crate::model::{build_slack_form, catalog_get, SlackForm};

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(xs)
    }

    fn slack(name: &str) -> SlackForm {
        build_slack_form(&catalog_get(name).unwrap().problem).unwrap()
    }

    fn opts(omega: f64) -> InnerOptions {
        InnerOptions {
            omega,
            ..Default::default()
        }
    }

    #[test]
    fn linear_as_nl_subproblem_recovers_solution() {
        let sf = slack("linear-as-nl");
        let lin = linearize_constraints(&sf, &v(&[1.0, 1.0, 0.0])).unwrap();
        let sub = assemble_elastic(&sf, lin, &v(&[0.0]), 0.0, 100.0);
        let sol = solve_lc(&sub, &opts(1e-8), None).unwrap();
        assert_eq!(sol.status, InnerStatus::Converged);
        assert!((sol.x_star.rows(0, 2) - v(&[1.0, 1.0])).amax() < 1e-6);
        assert!((sol.delta_y[0] - 2.0).abs() < 1e-6);
        assert!(sol.z_star.rows(0, 2).amax() < 1e-6);
        assert!(sol.elastic_norm() < 1e-9);
        assert!(verify_relaxed_kkt(&sub, &sol, 1e-8, 1e-6));
    }

    #[test]
    fn linear_as_nl_from_origin() {
        let sf = slack("linear-as-nl");
        let lin = linearize_constraints(&sf, &v(&[0.0, 0.0, 0.0])).unwrap();
        let sub = assemble_elastic(&sf, lin, &v(&[0.0]), 0.0, 100.0);
        let sol = solve_lc(&sub, &opts(1e-8), None).unwrap();
        assert_eq!(sol.status, InnerStatus::Converged);
        assert!((sol.x_star.rows(0, 2) - v(&[1.0, 1.0])).amax() < 1e-6);
        assert!((sol.delta_y[0] - 2.0).abs() < 1e-6);
    }

    #[test]
    fn bcl_mode_minimizes_penalized_lagrangian() {
        // sigma = 0: minimize x1^2 + x2^2 + (x1 + x2 - 2)^2 over x >= 0 -> (2/3, 2/3)
        let sf = slack("linear-as-nl");
        let lin = linearize_constraints(&sf, &v(&[1.0, 1.0, 0.0])).unwrap();
        let sub = assemble_elastic(&sf, lin, &v(&[0.0]), 2.0, 0.0);
        let sol = solve_lc(&sub, &opts(1e-9), None).unwrap();
        assert_eq!(sol.status, InnerStatus::Converged);
        let x = sol.x_star.rows(0, 2).into_owned();
        assert!((x - v(&[2.0 / 3.0, 2.0 / 3.0])).amax() < 1e-6);

        // grid oracle at 1e-3 resolution
        let mut best = (f64::INFINITY, 0.0, 0.0);
        for i in 0..=1000 {
            for j in 0..=1000 {
                let (a, b) = (i as f64 * 1e-3, j as f64 * 1e-3);
                let f = a * a + b * b + (a + b - 2.0).powi(2);
                if f < best.0 {
                    best = (f, a, b);
                }
            }
        }
        assert!((best.1 - sol.x_star[0]).abs() <= 1e-3 && (best.2 - sol.x_star[1]).abs() <= 1e-3);
        assert!(sol.delta_y.amax() <= 1e-9);
    }

    #[test]
    fn unbounded_ray_subproblem() {
        let sf = slack("unbounded-ray");
        let xk = sf.extend(&v(&[1.0, 0.0]));
        let lin = linearize_constraints(&sf, &xk).unwrap();
        let sub = assemble_elastic(&sf, lin, &v(&[0.0]), 0.0, 100.0);
        let sol = solve_lc(&sub, &opts(1e-6), None).unwrap();
        assert_eq!(sol.status, InnerStatus::Unbounded);
    }

    #[test]
    fn verify_rejects_constructed_violations() {
        let sf = slack("linear-as-nl");
        let lin = linearize_constraints(&sf, &v(&[1.0, 1.0, 0.0])).unwrap();
        let sigma = 100.0;
        let sub = assemble_elastic(&sf, lin, &v(&[0.0]), 0.0, sigma);

        // exact KKT point: x = (1, 1), dy = 2, z_x = 0, z_s = dy
        let exact = SubproblemSolution {
            x_star: v(&[1.0, 1.0, 0.0]),
            delta_y: v(&[2.0]),
            z_star: v(&[0.0, 0.0, 2.0]),
            v_star: v(&[0.0]),
            w_star: v(&[0.0]),
            status: InnerStatus::Converged,
            inner_iterations: 0,
            function_evals: 0,
        };
        assert!(verify_relaxed_kkt(&sub, &exact, 1e-12, 1e-12));

        let omega = 1e-3;
        let mut big_dy = exact.clone();
        big_dy.delta_y = v(&[sigma + 2.0 * omega]);
        big_dy.z_star = v(&[2.0 - big_dy.delta_y[0], 2.0 - big_dy.delta_y[0], big_dy.delta_y[0]]);
        assert!(!verify_relaxed_kkt(&sub, &big_dy, omega, 1e-6));

        let mut negative_elastic = exact.clone();
        negative_elastic.v_star = v(&[-1e-3]);
        negative_elastic.w_star = v(&[-1e-3]);
        assert!(!verify_relaxed_kkt(&sub, &negative_elastic, omega, 1e-6));
    }

    #[test]
    fn warm_start_reaches_same_point() {
        let sf = slack("circle-proj");
        let xk = sf.extend(&v(&[1.0, 0.5]));
        let lin = linearize_constraints(&sf, &xk).unwrap();
        let sub = assemble_elastic(&sf, lin, &v(&[0.0]), 10.0, 100.0);
        let cold = solve_lc(&sub, &opts(1e-8), None).unwrap();
        let warm = solve_lc(&sub, &opts(1e-8), Some(&cold)).unwrap();
        assert_eq!(warm.status, InnerStatus::Converged);
        assert!((cold.x_star - &warm.x_star).amax() < 1e-6);
        assert!(warm.inner_iterations <= cold.inner_iterations);
    }
}
