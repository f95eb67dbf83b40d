//! Constraint linearization and the elastic linearly constrained subproblem.
//!
//! At a base point `x_k` the subproblem is
//!
//! ```text
//!     minimize    L(x, y_k, rho_k) + sigma_k * e'(v + w)
//!     subject to  J_k x + offset + v - w = 0,   x in box,  v, w >= 0
//! ```
//!
//! over the lifted vector `(x_ext, v, w)`. Elastics on linear rows are fixed at
//! zero so that those rows stay hard constraints.

use std::ops::Range;

use nalgebra::{DMatrix, DVector};

use crate::merit::{aug_lagrangian_gradient, aug_lagrangian_value};
use crate::model::{Bounds, Evaluation, ModelError, SlackForm};

#[derive(Debug, Clone)]
pub struct Linearization {
    pub x_k: DVector<f64>,
    pub c_k: DVector<f64>,
    pub j_k: DMatrix<f64>,
    /// `c_k - J_k x_k`, so the linear model is `J_k x + offset`.
    pub offset: DVector<f64>,
}

impl Linearization {
    pub fn from_evaluation(x_k: &DVector<f64>, ev: &Evaluation) -> Self {
        let offset = &ev.c - &ev.jac * x_k;
        Self {
            x_k: x_k.clone(),
            c_k: ev.c.clone(),
            j_k: ev.jac.clone(),
            offset,
        }
    }

    /// The linear model `c_k + J_k (x - x_k)`.
    pub fn value(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.j_k * x + &self.offset
    }
}

pub fn linearize_constraints(sf: &SlackForm, x_k: &DVector<f64>) -> Result<Linearization, ModelError> {
    debug_assert!(sf.bounds().contains(x_k, 1e-8), "base point outside the box");
    let ev = sf.evaluate(x_k)?;
    Ok(Linearization::from_evaluation(x_k, &ev))
}

/// Index layout of the lifted vector `(x_ext, v, w)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LiftedLayout {
    pub n_ext: usize,
    pub m: usize,
}

impl LiftedLayout {
    pub fn len(&self) -> usize {
        self.n_ext + 2 * self.m
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn x(&self) -> Range<usize> {
        0..self.n_ext
    }

    pub fn v(&self) -> Range<usize> {
        self.n_ext..self.n_ext + self.m
    }

    pub fn w(&self) -> Range<usize> {
        self.n_ext + self.m..self.len()
    }
}

#[derive(Debug, Clone)]
pub struct ElasticSubproblem {
    sf: SlackForm,
    pub lin: Linearization,
    pub y_k: DVector<f64>,
    pub rho_k: f64,
    pub sigma_k: f64,
    pub dims: LiftedLayout,
    elastic: Vec<bool>,
    bounds: Bounds,
    matrix: DMatrix<f64>,
}

pub fn assemble_elastic(
    sf: &SlackForm,
    lin: Linearization,
    y_k: &DVector<f64>,
    rho_k: f64,
    sigma_k: f64,
) -> ElasticSubproblem {
    assert!(sigma_k >= 0.0 && rho_k >= 0.0, "negative penalty parameter");
    let dims = LiftedLayout {
        n_ext: sf.n_ext(),
        m: sf.m(),
    };
    let elastic = sf.nonlinear_rows();

    let elastic_upper = DVector::from_iterator(
        dims.m,
        elastic.iter().map(|&e| if e { f64::INFINITY } else { 0.0 }),
    );
    let elastic_bounds = Bounds {
        lower: DVector::zeros(dims.m),
        upper: elastic_upper,
    };
    let bounds = Bounds::stack(&[sf.bounds(), &elastic_bounds, &elastic_bounds]);

    let mut matrix = DMatrix::zeros(dims.m, dims.len());
    matrix.view_mut((0, 0), (dims.m, dims.n_ext)).copy_from(&lin.j_k);
    for i in 0..dims.m {
        matrix[(i, dims.n_ext + i)] = 1.0;
        matrix[(i, dims.n_ext + dims.m + i)] = -1.0;
    }

    ElasticSubproblem {
        sf: sf.clone(),
        lin,
        y_k: y_k.clone(),
        rho_k,
        sigma_k,
        dims,
        elastic,
        bounds,
        matrix,
    }
}

impl ElasticSubproblem {
    pub fn slack_form(&self) -> &SlackForm {
        &self.sf
    }

    /// Box on the lifted vector.
    pub fn bounds(&self) -> &Bounds {
        &self.bounds
    }

    /// `[J_k  I  -I]`.
    pub fn constraint_matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// Right-hand side `b` of the lifted system `E u = b`.
    pub fn rhs(&self) -> DVector<f64> {
        -&self.lin.offset
    }

    /// Fix every elastic at zero, leaving the plain linearly constrained
    /// subproblem.
    pub fn without_elastics(mut self) -> Self {
        let start = self.dims.n_ext;
        for i in start..self.dims.len() {
            self.bounds.upper[i] = 0.0;
        }
        self.elastic.iter_mut().for_each(|e| *e = false);
        self
    }

    /// Which rows carry (non-fixed) elastics.
    pub fn elastic_rows(&self) -> &[bool] {
        &self.elastic
    }

    pub fn x_part(&self, u: &DVector<f64>) -> DVector<f64> {
        u.rows(0, self.dims.n_ext).into_owned()
    }

    pub fn v_part(&self, u: &DVector<f64>) -> DVector<f64> {
        u.rows(self.dims.n_ext, self.dims.m).into_owned()
    }

    pub fn w_part(&self, u: &DVector<f64>) -> DVector<f64> {
        u.rows(self.dims.n_ext + self.dims.m, self.dims.m).into_owned()
    }

    pub fn lift(&self, x: &DVector<f64>, v: &DVector<f64>, w: &DVector<f64>) -> DVector<f64> {
        let mut u = DVector::zeros(self.dims.len());
        u.rows_mut(0, self.dims.n_ext).copy_from(x);
        u.rows_mut(self.dims.n_ext, self.dims.m).copy_from(v);
        u.rows_mut(self.dims.n_ext + self.dims.m, self.dims.m).copy_from(w);
        u
    }

    /// Lift `x` with the cheapest elastics for its linearized residual.
    pub fn lift_with_optimal_elastics(&self, x: &DVector<f64>) -> DVector<f64> {
        let (mut v, mut w) = optimal_elastics(&self.lin.value(x));
        for (i, &e) in self.elastic.iter().enumerate() {
            if !e {
                v[i] = 0.0;
                w[i] = 0.0;
            }
        }
        self.lift(x, &v, &w)
    }

    /// `(x_k, (c_k)-, (c_k)+)`.
    pub fn base_point(&self) -> DVector<f64> {
        self.lift_with_optimal_elastics(&self.lin.x_k)
    }

    /// `J_k x + offset + v - w`.
    pub fn residual(&self, u: &DVector<f64>) -> DVector<f64> {
        &self.matrix * u + &self.lin.offset
    }

    pub fn elastic_penalty(&self, u: &DVector<f64>) -> f64 {
        self.sigma_k * (self.v_part(u).sum() + self.w_part(u).sum())
    }

    /// Lifted objective value and gradient.
    pub fn objective(&self, u: &DVector<f64>) -> Result<(f64, DVector<f64>), ModelError> {
        let x = self.x_part(u);
        let ev = self.sf.evaluate(&x)?;
        let value = aug_lagrangian_value(&ev, &self.y_k, self.rho_k) + self.elastic_penalty(u);
        let gx = aug_lagrangian_gradient(&ev, &self.y_k, self.rho_k);
        let mut grad = DVector::from_element(self.dims.len(), self.sigma_k);
        grad.rows_mut(0, self.dims.n_ext).copy_from(&gx);
        Ok((value, grad))
    }

    /// Subproblem objective restricted to `x` (no elastic term).
    pub fn lagrangian_value(&self, x: &DVector<f64>) -> Result<f64, ModelError> {
        let ev = self.sf.evaluate(x)?;
        Ok(aug_lagrangian_value(&ev, &self.y_k, self.rho_k))
    }
}

/// Signed split of `cbar` into `v = (-cbar)+` and `w = (cbar)+`.
pub fn optimal_elastics(cbar_val: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
    let v = cbar_val.map(|c| (-c).max(0.0));
    let w = cbar_val.map(|c| c.max(0.0));
    (v, w)
}

/// Strict `||dy||_inf < sigma`.
pub fn elastic_threshold_holds(delta_y: &DVector<f64>, sigma: f64) -> bool {
    delta_y.amax() < sigma
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_slack_form, catalog_get, NlpProblem};

    fn ext(xs: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(xs)
    }

    fn single_row(c: fn(&DVector<f64>) -> f64, j: fn(&DVector<f64>) -> [f64; 2]) -> SlackForm {
        let p = NlpProblem::builder(2)
            .objective(|x| x[0] * x[0] + x[1] * x[1], |x| ext(&[2.0 * x[0], 2.0 * x[1]]))
            .nonlinear_rows(
                1,
                move |x| ext(&[c(x)]),
                move |x| DMatrix::from_row_slice(1, 2, &j(x)),
                vec![0.0],
                vec![0.0],
            )
            .start(vec![0.5, 0.5])
            .build()
            .unwrap();
        build_slack_form(&p).unwrap()
    }

    #[test]
    fn circle_linearization_at_one_one() {
        let sf = single_row(|x| x[0] * x[0] + x[1] * x[1] - 1.0, |x| [2.0 * x[0], 2.0 * x[1]]);
        let xk = ext(&[1.0, 1.0, 0.0]);
        let lin = linearize_constraints(&sf, &xk).unwrap();
        assert_eq!(lin.c_k, ext(&[1.0]));
        assert_eq!(lin.j_k.row(0).columns(0, 2).into_owned(), DMatrix::from_row_slice(1, 2, &[2.0, 2.0]));
        assert_eq!(lin.value(&xk), lin.c_k);
        // cbar(x) = 2 x1 + 2 x2 - 3
        assert_eq!(lin.value(&ext(&[0.0, 0.0, 0.0])), ext(&[-3.0]));
    }

    #[test]
    fn affine_rows_linearize_to_themselves() {
        let sf = single_row(|x| x[0] + x[1] - 2.0, |_| [1.0, 1.0]);
        let lin = linearize_constraints(&sf, &ext(&[0.3, 0.1, 0.0])).unwrap();
        for x in [ext(&[5.0, -2.0, 0.0]), ext(&[0.0, 0.0, 0.0]), ext(&[1.0, 1.0, 0.0])] {
            assert!((lin.value(&x) - sf.residual(&x).unwrap()).amax() < 1e-15);
        }
    }

    #[test]
    fn degenerate_row_does_not_error() {
        let sf = single_row(|x| x[0] * x[0], |x| [2.0 * x[0], 0.0]);
        let lin = linearize_constraints(&sf, &ext(&[0.0, 0.0, 0.0])).unwrap();
        assert_eq!(lin.value(&ext(&[3.0, -4.0, 0.0])), ext(&[0.0]));
    }

    #[test]
    fn lifted_dimension() {
        let p = NlpProblem::builder(1)
            .objective(|x| x[0] * x[0], |x| ext(&[2.0 * x[0]]))
            .nonlinear_rows(1, |x| ext(&[x[0].sin()]), |x| DMatrix::from_element(1, 1, x[0].cos()), vec![0.0], vec![0.5])
            .linear_rows(DMatrix::from_element(1, 1, 1.0), vec![-1.0], vec![1.0])
            .build()
            .unwrap();
        let sf = build_slack_form(&p).unwrap();
        assert_eq!(sf.n_ext(), 3);
        let lin = linearize_constraints(&sf, &ext(&[0.0, 0.0, 0.0])).unwrap();
        let sub = assemble_elastic(&sf, lin, &ext(&[0.0, 0.0]), 1.0, 1.0);
        assert_eq!(sub.dims.len(), 7);
        assert_eq!(sub.elastic_rows(), &[true, false]);
        // linear-row elastics are pinned
        assert_eq!(sub.bounds().upper[4], 0.0);
        assert_eq!(sub.bounds().upper[6], 0.0);
    }

    #[test]
    fn zero_sigma_reduces_to_lagrangian() {
        let sf = build_slack_form(&catalog_get("circle-proj").unwrap().problem).unwrap();
        let xk = sf.extend(&ext(&[1.0, 1.0]));
        let lin = linearize_constraints(&sf, &xk).unwrap();
        let sub = assemble_elastic(&sf, lin, &ext(&[0.5]), 3.0, 0.0);
        let u = sub.lift(&ext(&[0.2, 0.4, 0.0]), &ext(&[7.0]), &ext(&[2.0]));
        let (value, grad) = sub.objective(&u).unwrap();
        assert_eq!(value, sub.lagrangian_value(&ext(&[0.2, 0.4, 0.0])).unwrap());
        assert_eq!(grad[3], 0.0);
        assert_eq!(grad[4], 0.0);
    }

    #[test]
    fn base_point_satisfies_lifted_rows() {
        let sf = build_slack_form(&catalog_get("hs014").unwrap().problem).unwrap();
        let xk = sf.extend(&ext(&[1.0, 1.0]));
        // put the nonlinear slack off its row value so c_k != 0
        let mut xk = xk;
        xk[2] = 0.25;
        let lin = linearize_constraints(&sf, &xk).unwrap();
        let sub = assemble_elastic(&sf, lin, &ext(&[0.0, 0.0]), 1.0, 10.0);
        let u = sub.base_point();
        assert_eq!(sub.residual(&u).amax(), 0.0);
        assert!(sub.v_part(&u).min() >= 0.0 && sub.w_part(&u).min() >= 0.0);
    }

    #[test]
    fn elastic_split_examples() {
        let (v, w) = optimal_elastics(&ext(&[1.5, -0.25, 0.0]));
        assert_eq!(v, ext(&[0.0, 0.25, 0.0]));
        assert_eq!(w, ext(&[1.5, 0.0, 0.0]));
        assert_eq!(v.sum() + w.sum(), 1.75);

        let (v, w) = optimal_elastics(&ext(&[0.0, 0.0]));
        assert_eq!(v.amax() + w.amax(), 0.0);

        let (v, w) = optimal_elastics(&ext(&[-3.0]));
        assert_eq!((v[0], w[0]), (3.0, 0.0));
    }

    #[test]
    fn threshold_examples() {
        assert!(elastic_threshold_holds(&ext(&[0.5, -0.9]), 1.0));
        assert!(!elastic_threshold_holds(&ext(&[1.0]), 1.0));
        assert!(elastic_threshold_holds(&ext(&[0.0]), 1e-3));
    }
}
