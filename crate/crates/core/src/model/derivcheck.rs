use nalgebra::DVector;

use super::{ModelError, NlpProblem};

/// Pass threshold on the scaled central-difference error.
pub const DERIV_CHECK_THRESHOLD: f64 = 1e-5;
/// Default central-difference step.
pub const DERIV_CHECK_STEP: f64 = 1e-5;

/// Location of the largest derivative error (0-based).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DerivIndex {
    None,
    Gradient(usize),
    Jacobian { row: usize, col: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DerivReport {
    pub max_rel_err_g: f64,
    pub max_rel_err_j: f64,
    pub worst_index: DerivIndex,
    pub passed: bool,
}

/// Compare analytic first derivatives with central differences of step `h`.
///
/// The error for each entry is `|fd - analytic| / (1 + |analytic|)`. The point
/// should sit at least `h` inside any finite bound; the callbacks are probed at
/// `x ± h e_j` regardless.
pub fn check_derivatives(problem: &NlpProblem, x: &DVector<f64>, h: f64) -> Result<DerivReport, ModelError> {
    let n = problem.n();
    let g = problem.eval_g(x);
    let jac = problem.eval_j(x);
    if g.iter().chain(jac.iter()).any(|v| !v.is_finite()) {
        return Err(ModelError::NonFinite("derivatives"));
    }

    let mut max_g = 0.0_f64;
    let mut max_j = 0.0_f64;
    let mut worst = DerivIndex::None;
    let mut worst_err = -1.0_f64;

    let mut probe = x.clone();
    for col in 0..n {
        probe[col] = x[col] + h;
        let f_plus = problem.eval_f(&probe);
        let c_plus = problem.eval_c(&probe);
        probe[col] = x[col] - h;
        let f_minus = problem.eval_f(&probe);
        let c_minus = problem.eval_c(&probe);
        probe[col] = x[col];

        if !(f_plus.is_finite() && f_minus.is_finite())
            || c_plus.iter().chain(c_minus.iter()).any(|v| !v.is_finite())
        {
            return Err(ModelError::NonFinite("finite-difference probe"));
        }

        let fd = (f_plus - f_minus) / (2.0 * h);
        let err = (fd - g[col]).abs() / (1.0 + g[col].abs());
        max_g = max_g.max(err);
        if err > worst_err {
            worst_err = err;
            worst = DerivIndex::Gradient(col);
        }

        for row in 0..problem.m_c() {
            let fd = (c_plus[row] - c_minus[row]) / (2.0 * h);
            let a = jac[(row, col)];
            let err = (fd - a).abs() / (1.0 + a.abs());
            max_j = max_j.max(err);
            if err > worst_err {
                worst_err = err;
                worst = DerivIndex::Jacobian { row, col };
            }
        }
    }

    Ok(DerivReport {
        max_rel_err_g: max_g,
        max_rel_err_j: max_j,
        worst_index: worst,
        passed: max_g <= DERIV_CHECK_THRESHOLD && max_j <= DERIV_CHECK_THRESHOLD,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn bilinear(swapped: bool) -> NlpProblem {
        NlpProblem::builder(2)
            .objective(
                |x| x[0] * x[1],
                move |x| {
                    if swapped {
                        DVector::from_vec(vec![x[0], x[1]])
                    } else {
                        DVector::from_vec(vec![x[1], x[0]])
                    }
                },
            )
            .build()
            .unwrap()
    }

    #[test]
    fn bilinear_gradient_passes() {
        let r = check_derivatives(&bilinear(false), &DVector::from_vec(vec![2.0, 3.0]), 1e-5).unwrap();
        assert!(r.max_rel_err_g <= 1e-8, "{}", r.max_rel_err_g);
        assert!(r.passed);
    }

    #[test]
    fn circle_jacobian_row() {
        let p = NlpProblem::builder(2)
            .objective(|_| 0.0, |_| DVector::zeros(2))
            .nonlinear_rows(
                1,
                |x| DVector::from_vec(vec![x[0] * x[0] + x[1] * x[1] - 1.0]),
                |x| DMatrix::from_row_slice(1, 2, &[2.0 * x[0], 2.0 * x[1]]),
                vec![0.0],
                vec![0.0],
            )
            .build()
            .unwrap();
        let x = DVector::from_vec(vec![1.0, 1.0]);
        let r = check_derivatives(&p, &x, 1e-5).unwrap();
        assert!(r.max_rel_err_j <= 1e-8);
        assert!(r.passed);
    }

    #[test]
    fn swapped_gradient_fails_at_first_coordinate() {
        let r = check_derivatives(&bilinear(true), &DVector::from_vec(vec![2.0, 3.0]), 1e-5).unwrap();
        assert!(!r.passed);
        // errors are 1/3 at x1 and 1/4 at x2
        assert_eq!(r.worst_index, DerivIndex::Gradient(0));
        assert!((r.max_rel_err_g - 1.0 / 3.0).abs() < 1e-8);
    }

    #[test]
    fn non_finite_probe_is_an_error() {
        let p = NlpProblem::builder(1)
            .objective(|x| x[0].ln(), |x| DVector::from_vec(vec![1.0 / x[0]]))
            .build()
            .unwrap();
        let r = check_derivatives(&p, &DVector::from_vec(vec![0.0]), 1e-5);
        assert!(r.is_err());
    }
}
