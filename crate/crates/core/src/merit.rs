//! Augmented Lagrangian, first-order multipliers and optimality measures on
//! the slack form.
//!
//! Sign convention: the Lagrangian is `f(x) - y'c(x)` and the reduced costs
//! satisfy `g(x) - J(x)'y = z`.

use nalgebra::DVector;
use serde::Serialize;

use crate::model::{Bounds, Evaluation, ModelError, SlackForm};

/// Equality multipliers `y` (nonlinear rows first) and reduced costs `z`.
#[derive(Debug, Clone, PartialEq)]
pub struct Multipliers {
    pub y: DVector<f64>,
    pub z: DVector<f64>,
}

/// Infinity-norm pieces of the optimality measure `F(x, y, z)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct KktResidual {
    pub primal_inf: f64,
    pub dual_inf: f64,
    pub comp: f64,
    pub f_norm: f64,
}

impl KktResidual {
    pub fn new(primal_inf: f64, dual_inf: f64, comp: f64) -> Self {
        Self {
            primal_inf,
            dual_inf,
            comp,
            f_norm: primal_inf.max(dual_inf).max(comp),
        }
    }
}

/// `y - rho * c`.
pub fn first_order_multiplier(c_val: &DVector<f64>, y: &DVector<f64>, rho: f64) -> DVector<f64> {
    y - c_val * rho
}

/// `L = f - y'c + rho/2 ||c||^2` from an existing evaluation.
pub fn aug_lagrangian_value(ev: &Evaluation, y: &DVector<f64>, rho: f64) -> f64 {
    ev.f - y.dot(&ev.c) + 0.5 * rho * ev.c.norm_squared()
}

/// `g - J' yhat` from an existing evaluation.
pub fn aug_lagrangian_gradient(ev: &Evaluation, y: &DVector<f64>, rho: f64) -> DVector<f64> {
    let yhat = first_order_multiplier(&ev.c, y, rho);
    &ev.grad - ev.jac.tr_mul(&yhat)
}

pub fn aug_lagrangian(sf: &SlackForm, x_ext: &DVector<f64>, y: &DVector<f64>, rho: f64) -> Result<f64, ModelError> {
    let f = sf.objective(x_ext)?;
    let c = sf.residual(x_ext)?;
    let value = f - y.dot(&c) + 0.5 * rho * c.norm_squared();
    if !value.is_finite() {
        return Err(ModelError::NonFinite("augmented Lagrangian"));
    }
    Ok(value)
}

pub fn aug_lagrangian_grad(
    sf: &SlackForm,
    x_ext: &DVector<f64>,
    y: &DVector<f64>,
    rho: f64,
) -> Result<DVector<f64>, ModelError> {
    let ev = sf.evaluate(x_ext)?;
    let grad = aug_lagrangian_gradient(&ev, y, rho);
    if grad.iter().any(|v| !v.is_finite()) {
        return Err(ModelError::NonFinite("augmented Lagrangian gradient"));
    }
    Ok(grad)
}

/// Per-component two-sided complementarity.
///
/// For `l <= x <= u` this is
/// `max(min(x - l, z+), min(u - x, z-))`, which is `|z|` for a free variable
/// and `min(x, z)` with a relaxed sign condition when `l = 0, u = inf`.
pub fn complementarity(x: &DVector<f64>, z: &DVector<f64>, bounds: &Bounds) -> DVector<f64> {
    DVector::from_iterator(
        x.len(),
        (0..x.len()).map(|j| comp_component(x[j], z[j], bounds.lower[j], bounds.upper[j])),
    )
}

pub fn comp_component(x: f64, z: f64, lower: f64, upper: f64) -> f64 {
    // an infinite gap gives min(inf, z+) = z+, i.e. any sign violation counts in full
    let lower_gap = (x - lower).max(0.0);
    let upper_gap = (upper - x).max(0.0);
    let from_lower = lower_gap.min(z.max(0.0));
    let from_upper = upper_gap.min((-z).max(0.0));
    from_lower.max(from_upper)
}

pub fn comp_norm(x: &DVector<f64>, z: &DVector<f64>, bounds: &Bounds) -> f64 {
    (0..x.len())
        .map(|j| comp_component(x[j], z[j], bounds.lower[j], bounds.upper[j]))
        .fold(0.0, f64::max)
}

/// Residuals from an existing evaluation at `x_ext`.
pub fn kkt_residual_at(ev: &Evaluation, bounds: &Bounds, x_ext: &DVector<f64>, y: &DVector<f64>, z: &DVector<f64>) -> KktResidual {
    let primal = ev.c.amax().max(bounds.violation(x_ext));
    let dual = (&ev.grad - ev.jac.tr_mul(y) - z).amax();
    let comp = comp_norm(x_ext, z, bounds);
    KktResidual::new(primal, dual, comp)
}

/// `||F(x, y, z)||` components at `rho = 0`.
pub fn kkt_residual(
    sf: &SlackForm,
    x_ext: &DVector<f64>,
    y: &DVector<f64>,
    z: &DVector<f64>,
) -> Result<KktResidual, ModelError> {
    let ev = sf.evaluate(x_ext)?;
    Ok(kkt_residual_at(&ev, sf.bounds(), x_ext, y, z))
}

pub fn is_optimal(res: &KktResidual, omega_star: f64, eta_star: f64) -> bool {
    res.primal_inf <= eta_star && res.comp <= omega_star && res.dual_inf <= omega_star
}

/// First-order measure for `min 1/2 ||c(x)||^2` over the box: complementarity
/// of `x` against the gradient `J'c`.
pub fn infeasibility_stationarity(sf: &SlackForm, x_ext: &DVector<f64>) -> Result<f64, ModelError> {
    let ev = sf.evaluate(x_ext)?;
    let grad = ev.jac.tr_mul(&ev.c);
    Ok(comp_norm(x_ext, &grad, sf.bounds()))
}
