//! Stabilized LCL outer loop, with canonical LCL and BCL variants.
//!
//! Each major iteration linearizes the constraints at `x_k`, solves the
//! elastic subproblem and either accepts the point (updating `y`, `z`, `sigma`
//! and tightening `eta`) or keeps the estimates and raises `rho`.

use log::{debug, info};
use nalgebra::DVector;
use serde::Serialize;
use thiserror::Error;

use crate::innersolve::{
    solve_lc, solve_proximal, InnerError, InnerOptions, InnerStatus, ProximalVariant, SubproblemSolution, PROXIMAL_TOL,
};
use crate::linearize::{assemble_elastic, linearize_constraints};
use crate::merit::{first_order_multiplier, infeasibility_stationarity, is_optimal, kkt_residual, KktResidual};
use crate::model::{build_slack_form, check_derivatives, EvalCounts, ModelError, NlpProblem, SlackForm, DERIV_CHECK_STEP};

/// Smallest linearized-row tolerance used with the direct multiplier update.
const DIRECT_ROW_TOL_FLOOR: f64 = 1e-13;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Stabilized,
    /// Elastic weight pinned at `sigma_hi`, direct multiplier update, fixed `rho`.
    Canonical,
    /// Elastic weight pinned at zero.
    Bcl,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum MultiplierUpdate {
    /// `y = y* - rho c(x*)`
    FirstOrder,
    /// `y = y*`
    Direct,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ZUpdate {
    FromSubproblem,
    /// `z = g - J'y` at the new point.
    Recompute,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OuterOptions {
    pub omega_star: f64,
    pub eta_star: f64,
    pub omega_0: f64,
    pub eta_0: f64,
    pub sigma_lo: f64,
    pub sigma_hi: f64,
    /// Scaled by `1 + ||y0||_inf`.
    pub sigma_0: f64,
    pub tau_rho: f64,
    pub tau_sigma: f64,
    pub alpha: f64,
    pub beta: f64,
    /// `None` means `10^2.5 / m_c`, floored at 1.001.
    pub rho_0: Option<f64>,
    pub rho_bar: f64,
    pub max_major: usize,
    pub mode: Mode,
    pub multiplier_update: MultiplierUpdate,
    pub z_update: ZUpdate,
    pub proximal: ProximalVariant,
    pub check_derivatives: bool,
    pub inner: InnerOptions,
}

impl Default for OuterOptions {
    fn default() -> Self {
        Self {
            omega_star: 1e-6,
            eta_star: 1e-6,
            omega_0: 1e-3,
            eta_0: 1.0,
            sigma_lo: 1.0,
            sigma_hi: 1e4,
            sigma_0: 1e2,
            tau_rho: 10.0,
            tau_sigma: 10.0,
            alpha: 0.1,
            beta: 0.9,
            rho_0: None,
            rho_bar: 1e8,
            max_major: 500,
            mode: Mode::Stabilized,
            multiplier_update: MultiplierUpdate::FirstOrder,
            z_update: ZUpdate::FromSubproblem,
            proximal: ProximalVariant::PP2,
            check_derivatives: true,
            inner: InnerOptions::default(),
        }
    }
}

impl OuterOptions {
    /// Options for `mode` with the matching multiplier rule.
    pub fn for_mode(mode: Mode) -> Self {
        let multiplier_update = match mode {
            Mode::Canonical => MultiplierUpdate::Direct,
            _ => MultiplierUpdate::FirstOrder,
        };
        Self {
            mode,
            multiplier_update,
            ..Self::default()
        }
    }

    pub fn initial_rho(&self, m_c: usize) -> f64 {
        let rho = self.rho_0.unwrap_or_else(|| 10f64.powf(2.5) / m_c.max(1) as f64);
        rho.max(1.001)
    }

    /// Feasibility tolerance for linearized and linear rows.
    pub fn delta_lin(&self) -> f64 {
        self.inner.delta_lin.min(self.eta_star)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    Success,
    Failure,
}

/// One major iteration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationRecord {
    pub k: usize,
    pub branch: Branch,
    /// Parameters used for the subproblem.
    pub rho: f64,
    pub sigma: f64,
    pub eta: f64,
    pub omega: f64,
    /// Parameters after the update.
    pub rho_next: f64,
    pub sigma_next: f64,
    pub eta_next: f64,
    /// `||c(x*)||_inf` on the slack form.
    pub c_norm: f64,
    /// `||F||_inf` at the iterate after the update.
    pub f_norm: f64,
    pub inner_iterations: usize,
    pub inner_status: InnerStatus,
    /// `||dy*||_inf` over the elastic rows.
    pub delta_y_norm: f64,
    /// `||v*||_inf + ||w*||_inf`.
    pub elastic_norm: f64,
}

#[derive(Debug, Clone)]
pub struct OuterState {
    pub k: usize,
    pub x: DVector<f64>,
    pub y: DVector<f64>,
    pub z: DVector<f64>,
    pub rho: f64,
    pub sigma: f64,
    pub eta: f64,
    pub omega: f64,
    pub trace: Vec<IterationRecord>,
}

impl OuterState {
    pub fn new(x: DVector<f64>, y: DVector<f64>, z: DVector<f64>, rho: f64, sigma: f64, opts: &OuterOptions) -> Self {
        Self {
            k: 0,
            x,
            y,
            z,
            rho,
            sigma,
            eta: opts.eta_0,
            omega: opts.omega_0.max(opts.omega_star),
            trace: Vec::new(),
        }
    }

    /// Accept the subproblem point. `c_val` is `c(x*)` and `z_new` the reduced
    /// costs to store.
    pub fn update_on_success(&mut self, sol: &SubproblemSolution, y_star: &DVector<f64>, c_val: &DVector<f64>, z_new: DVector<f64>, dy_norm: f64, opts: &OuterOptions) {
        self.x = sol.x_star.clone();
        self.y = match opts.multiplier_update {
            MultiplierUpdate::FirstOrder => first_order_multiplier(c_val, y_star, self.rho),
            MultiplierUpdate::Direct => y_star.clone(),
        };
        self.z = z_new;
        self.sigma = match opts.mode {
            Mode::Stabilized => dy_norm.clamp(opts.sigma_lo, opts.sigma_hi),
            Mode::Canonical => opts.sigma_hi,
            Mode::Bcl => 0.0,
        };
        if opts.mode != Mode::Canonical {
            self.eta /= self.rho.powf(opts.beta);
        }
    }

    /// Keep the estimates, raise `rho`, lower `sigma` and reset `eta`.
    pub fn update_on_failure(&mut self, opts: &OuterOptions) {
        if opts.mode == Mode::Canonical {
            return;
        }
        self.rho *= opts.tau_rho;
        if opts.mode == Mode::Stabilized {
            self.sigma /= opts.tau_sigma;
        }
        self.eta = opts.eta_0 / self.rho.powf(opts.alpha);
    }

    pub fn next_omega(&self, f_norm: f64, opts: &OuterOptions) -> f64 {
        next_omega(self.omega, f_norm, opts.omega_star)
    }

    pub fn detect_infeasible(&self, violation: f64, opts: &OuterOptions) -> bool {
        detect_infeasible(violation, self.rho, opts)
    }
}

/// `max(0.5 min(omega, f_norm^2), omega_star)`.
pub fn next_omega(omega: f64, f_norm: f64, omega_star: f64) -> f64 {
    (0.5 * omega.min(f_norm * f_norm)).max(omega_star)
}

pub fn detect_infeasible(violation: f64, rho: f64, opts: &OuterOptions) -> bool {
    violation > opts.eta_star && rho > opts.rho_bar
}

pub fn detect_unbounded(x_k_feasible: bool, inner_status: InnerStatus) -> bool {
    x_k_feasible && inner_status == InnerStatus::Unbounded
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
    CannotImprove,
}

#[derive(Error, Debug, Clone, PartialEq)]
pub enum SolveError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("derivative check failed at the initial guess (gradient error {max_rel_err_g:e}, Jacobian error {max_rel_err_j:e})")]
    DerivativeCheck { max_rel_err_g: f64, max_rel_err_j: f64 },
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveReport {
    pub status: SolveStatus,
    /// Original variables.
    pub x: Vec<f64>,
    /// Extended vector `(x, s_c, s_A)`.
    pub x_ext: Vec<f64>,
    pub y: Vec<f64>,
    pub z: Vec<f64>,
    pub objective: f64,
    pub residual: KktResidual,
    pub majors: usize,
    pub minors: usize,
    pub fevals: usize,
    pub rho: f64,
    /// First-order measure for `min 1/2 ||c||^2` at the final point.
    pub infeasibility_measure: f64,
    pub trace: Vec<IterationRecord>,
}

pub fn solve(problem: &NlpProblem, opts: &OuterOptions) -> Result<SolveReport, SolveError> {
    solve_with(problem, opts, None)
}

/// Solve from `problem.x_tilde()` with optional initial multipliers for all
/// rows of the slack form.
pub fn solve_with(problem: &NlpProblem, opts: &OuterOptions, y0: Option<&DVector<f64>>) -> Result<SolveReport, SolveError> {
    let counts0 = problem.eval_counts();
    if opts.check_derivatives {
        let report = check_derivatives(problem, problem.x_tilde(), DERIV_CHECK_STEP)?;
        if !report.passed {
            return Err(SolveError::DerivativeCheck {
                max_rel_err_g: report.max_rel_err_g,
                max_rel_err_j: report.max_rel_err_j,
            });
        }
    }
    let sf = build_slack_form(problem)?;

    let m = sf.m();
    let y0 = match y0 {
        Some(y) if y.len() == m => y.clone(),
        Some(y) => {
            return Err(ModelError::DimensionMismatch {
                what: "initial multipliers",
                expected: m.to_string(),
                got: y.len().to_string(),
            }
            .into())
        }
        None => DVector::zeros(m),
    };

    let delta_lin = opts.delta_lin();
    let x0 = match solve_proximal(&sf, problem.x_tilde(), opts.proximal, PROXIMAL_TOL, 0.1 * delta_lin) {
        Ok(x) => x,
        Err(InnerError::Model(e)) => return Err(e.into()),
        Err(InnerError::PpInfeasible { residual }) => {
            info!("linear rows and bounds are infeasible (residual {residual:e})");
            let x = sf.extend(&problem.bounds_x().project(problem.x_tilde()));
            let z = DVector::zeros(sf.n_ext());
            return finish(&sf, SolveStatus::Infeasible, x, y0, z, 0, 0, counts0, 0.0, Vec::new());
        }
    };

    if sf.m_c() == 0 {
        return solve_linear_only(&sf, opts, x0, y0, counts0);
    }

    let ev0 = sf.evaluate(&x0)?;
    let z0 = &ev0.grad - ev0.jac.tr_mul(&y0);
    let rho0 = opts.initial_rho(sf.m_c());
    let sigma0 = match opts.mode {
        Mode::Stabilized => opts.sigma_0 * (1.0 + y0.amax()),
        Mode::Canonical => opts.sigma_hi,
        Mode::Bcl => 0.0,
    };
    let mut st = OuterState::new(x0, y0, z0, rho0, sigma0, opts);
    let mut f_norm = kkt_residual(&sf, &st.x, &st.y, &st.z)?.f_norm;

    let mut minors = 0;
    let mut warm: Option<SubproblemSolution> = None;
    let mut stuck = 0;

    while st.k < opts.max_major {
        if st.k > 0 {
            st.omega = st.next_omega(f_norm, opts);
        }
        let omega = st.omega;
        // y = y* carries an error of rho * J'c(x*), so the direct update needs
        // the linearized rows satisfied well below omega / rho
        let row_tol = match opts.multiplier_update {
            MultiplierUpdate::FirstOrder => delta_lin,
            MultiplierUpdate::Direct => delta_lin.min(0.1 * omega / st.rho.max(1.0)).max(DIRECT_ROW_TOL_FLOOR),
        };
        let inner_opts = InnerOptions {
            omega,
            delta_lin: row_tol,
            ..opts.inner.clone()
        };

        let lin = linearize_constraints(&sf, &st.x)?;
        let mut sub = assemble_elastic(&sf, lin, &st.y, st.rho, st.sigma);
        if opts.mode == Mode::Canonical {
            sub = sub.without_elastics();
        }
        let sol = solve_lc(&sub, &inner_opts, warm.as_ref())?;
        minors += sol.inner_iterations;

        let (rho, sigma, eta) = (st.rho, st.sigma, st.eta);
        let dy_norm = sol.elastic_delta_y_norm(&sub);
        let x_k_feasible = sf.residual(&st.x)?.amax() <= opts.eta_star;

        if detect_unbounded(x_k_feasible, sol.status) {
            info!("subproblem unbounded at a feasible iterate");
            st.k += 1;
            let x = sol.x_star.clone();
            let z = sol.z_star.clone();
            return finish(&sf, SolveStatus::Unbounded, x, st.y, z, st.k, minors, counts0, st.rho, st.trace);
        }

        // an unbounded subproblem gives no usable point
        let c_star = match sol.status {
            InnerStatus::Unbounded => None,
            _ => sf.residual(&sol.x_star).ok(),
        };
        let c_norm = c_star.as_ref().map_or(f64::INFINITY, |c| c.amax());

        let success = match (opts.mode, sol.status, &c_star) {
            (Mode::Canonical, InnerStatus::Converged, Some(_)) => true,
            (_, InnerStatus::Converged, Some(_)) => c_norm <= opts.eta_star.max(st.eta),
            _ => false,
        };

        if sol.status == InnerStatus::IterationLimit && omega <= opts.omega_star {
            stuck += 1;
        } else {
            stuck = 0;
        }

        let mut record = IterationRecord {
            k: st.k,
            branch: if success { Branch::Success } else { Branch::Failure },
            rho,
            sigma,
            eta,
            omega,
            rho_next: rho,
            sigma_next: sigma,
            eta_next: eta,
            c_norm,
            f_norm,
            inner_iterations: sol.inner_iterations,
            inner_status: sol.status,
            delta_y_norm: dy_norm,
            elastic_norm: sol.elastic_norm(),
        };
        st.k += 1;

        if success {
            let c_val = c_star.expect("accepted point has constraint values");
            let y_star = &st.y + &sol.delta_y;
            let y_prev_star = y_star.clone();
            let mut next = st.clone();
            next.update_on_success(&sol, &y_star, &c_val, sol.z_star.clone(), dy_norm, opts);
            if opts.z_update == ZUpdate::Recompute {
                let ev = sf.evaluate(&next.x)?;
                next.z = &ev.grad - ev.jac.tr_mul(&next.y);
            }
            st = next;
            let res = kkt_residual(&sf, &st.x, &st.y, &st.z)?;
            f_norm = res.f_norm;
            record.rho_next = st.rho;
            record.sigma_next = st.sigma;
            record.eta_next = st.eta;
            record.f_norm = f_norm;
            log_record(&record);
            st.trace.push(record);

            let mut w = sol;
            w.delta_y = y_prev_star - &st.y;
            warm = Some(w);

            if is_optimal(&res, opts.omega_star, opts.eta_star) {
                return finish(&sf, SolveStatus::Optimal, st.x, st.y, st.z, st.k, minors, counts0, st.rho, st.trace);
            }
        } else {
            let violation = c_star.as_ref().map(|c| {
                c.iter()
                    .zip(sf.nonlinear_rows())
                    .filter(|(_, nl)| *nl)
                    .map(|(v, _)| v.abs())
                    .fold(0.0, f64::max)
            });
            if opts.mode != Mode::Canonical {
                if let Some(viol) = violation {
                    if st.detect_infeasible(viol, opts) {
                        log_record(&record);
                        st.trace.push(record);
                        info!("declared infeasible at rho = {:e}", st.rho);
                        let z = sol.z_star.clone();
                        return finish(&sf, SolveStatus::Infeasible, sol.x_star, st.y, z, st.k, minors, counts0, st.rho, st.trace);
                    }
                }
            }
            st.update_on_failure(opts);
            record.rho_next = st.rho;
            record.sigma_next = st.sigma;
            record.eta_next = st.eta;
            log_record(&record);
            st.trace.push(record);
            if stuck >= 2 {
                return finish(&sf, SolveStatus::CannotImprove, st.x, st.y, st.z, st.k, minors, counts0, st.rho, st.trace);
            }
            if sol.status != InnerStatus::Unbounded {
                warm = Some(sol);
            }
        }
    }
    finish(&sf, SolveStatus::IterationLimit, st.x, st.y, st.z, st.k, minors, counts0, st.rho, st.trace)
}

/// No nonlinear rows: one subproblem with hard linear rows.
fn solve_linear_only(
    sf: &SlackForm,
    opts: &OuterOptions,
    x0: DVector<f64>,
    y0: DVector<f64>,
    counts0: EvalCounts,
) -> Result<SolveReport, SolveError> {
    let inner_opts = InnerOptions {
        omega: opts.omega_star,
        delta_lin: opts.delta_lin(),
        ..opts.inner.clone()
    };
    let lin = linearize_constraints(sf, &x0)?;
    let sub = assemble_elastic(sf, lin, &y0, 0.0, 0.0);
    let sol = solve_lc(&sub, &inner_opts, None)?;
    let y = &y0 + &sol.delta_y;
    let status = match sol.status {
        InnerStatus::Unbounded => SolveStatus::Unbounded,
        InnerStatus::IterationLimit => SolveStatus::IterationLimit,
        InnerStatus::Converged => {
            let res = kkt_residual(sf, &sol.x_star, &y, &sol.z_star)?;
            if is_optimal(&res, opts.omega_star, opts.eta_star) {
                SolveStatus::Optimal
            } else {
                SolveStatus::CannotImprove
            }
        }
    };
    finish(sf, status, sol.x_star, y, sol.z_star, 0, sol.inner_iterations, counts0, 0.0, Vec::new())
}

#[allow(clippy::too_many_arguments)]
fn finish(
    sf: &SlackForm,
    status: SolveStatus,
    x_ext: DVector<f64>,
    y: DVector<f64>,
    z: DVector<f64>,
    majors: usize,
    minors: usize,
    counts0: EvalCounts,
    rho: f64,
    trace: Vec<IterationRecord>,
) -> Result<SolveReport, SolveError> {
    let p = sf.problem();
    let x = sf.x_part(&x_ext).into_owned();
    let ev = sf.evaluate(&x_ext);
    let (objective, residual, infeas) = match ev {
        Ok(ev) => (
            ev.f,
            crate::merit::kkt_residual_at(&ev, sf.bounds(), &x_ext, &y, &z),
            infeasibility_stationarity(sf, &x_ext).unwrap_or(f64::NAN),
        ),
        Err(_) => (f64::NAN, KktResidual::new(f64::NAN, f64::NAN, f64::NAN), f64::NAN),
    };
    let fevals = (p.eval_counts() - counts0).objective;
    Ok(SolveReport {
        status,
        x: x.iter().copied().collect(),
        x_ext: x_ext.iter().copied().collect(),
        y: y.iter().copied().collect(),
        z: z.iter().copied().collect(),
        objective,
        residual,
        majors,
        minors,
        fevals,
        rho,
        infeasibility_measure: infeas,
        trace,
    })
}

fn log_record(r: &IterationRecord) {
    debug!(
        "k={} {:?} rho={:.3e} sigma={:.3e} eta={:.3e} omega={:.3e} c={:.3e} F={:.3e} inner={} {:?}",
        r.k, r.branch, r.rho, r.sigma, r.eta, r.omega, r.c_norm, r.f_norm, r.inner_iterations, r.inner_status
    );
}
