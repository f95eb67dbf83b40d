//! Problem definition and the standardized slack form.
//!
//! A user problem has the shape
//!
//! ```text
//!     minimize f(x)   subject to   l <= (x; c(x); Ax) <= u
//! ```
//!
//! and is converted internally to an equality-constrained problem over the
//! extended vector `(x, s_c, s_A)`:
//!
//! ```text
//!     minimize f(x)   subject to   c(x) - s_c = 0,  Ax - s_A = 0,  l <= (x; s_c; s_A) <= u
//! ```
//!
//! Infinite bounds are encoded as `f64::INFINITY` / `f64::NEG_INFINITY`.

mod catalog;
mod derivcheck;

use std::fmt;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, DVectorView};
use serde::Serialize;
use thiserror::Error;

pub use catalog::{catalog, catalog_get, catalog_names, CatalogEntry, Classification};
pub use derivcheck::{check_derivatives, DerivIndex, DerivReport, DERIV_CHECK_STEP, DERIV_CHECK_THRESHOLD};

pub type ScalarFn = Arc<dyn Fn(&DVector<f64>) -> f64 + Send + Sync>;
pub type VectorFn = Arc<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>;
pub type MatrixFn = Arc<dyn Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync>;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum ModelError {
    #[error("bound vectors have different lengths ({lower} lower, {upper} upper)")]
    BoundLength { lower: usize, upper: usize },
    #[error("lower bound {lower} exceeds upper bound {upper} at index {index}")]
    InvertedBounds { index: usize, lower: f64, upper: f64 },
    #[error("NaN bound at index {0}")]
    NanBound(usize),
    #[error("{what}: expected dimension {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: String,
        got: String,
    },
    #[error("{0} is required but was not provided")]
    MissingCallback(&'static str),
    #[error("non-finite value returned by {0}")]
    NonFinite(&'static str),
    #[error("unknown catalog problem `{0}`")]
    UnknownProblem(String),
    #[error("known solution of `{name}` violates its constraints by {violation:e}")]
    KnownSolutionInfeasible { name: String, violation: f64 },
}

/// Componentwise box `lower <= x <= upper`.
#[derive(Debug, Clone, PartialEq)]
pub struct Bounds {
    pub lower: DVector<f64>,
    pub upper: DVector<f64>,
}

impl Bounds {
    pub fn new(lower: DVector<f64>, upper: DVector<f64>) -> Result<Self, ModelError> {
        if lower.len() != upper.len() {
            return Err(ModelError::BoundLength {
                lower: lower.len(),
                upper: upper.len(),
            });
        }
        for (i, (&l, &u)) in lower.iter().zip(upper.iter()).enumerate() {
            if l.is_nan() || u.is_nan() {
                return Err(ModelError::NanBound(i));
            }
            if l > u {
                return Err(ModelError::InvertedBounds {
                    index: i,
                    lower: l,
                    upper: u,
                });
            }
        }
        Ok(Self { lower, upper })
    }

    pub fn from_vecs(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self, ModelError> {
        Self::new(DVector::from_vec(lower), DVector::from_vec(upper))
    }

    pub fn free(n: usize) -> Self {
        Self {
            lower: DVector::from_element(n, f64::NEG_INFINITY),
            upper: DVector::from_element(n, f64::INFINITY),
        }
    }

    pub fn nonnegative(n: usize) -> Self {
        Self {
            lower: DVector::zeros(n),
            upper: DVector::from_element(n, f64::INFINITY),
        }
    }

    pub fn fixed(values: DVector<f64>) -> Self {
        Self {
            lower: values.clone(),
            upper: values,
        }
    }

    pub fn len(&self) -> usize {
        self.lower.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lower.is_empty()
    }

    pub fn project(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            x.len(),
            x.iter()
                .zip(self.lower.iter().zip(self.upper.iter()))
                .map(|(&xi, (&l, &u))| xi.max(l).min(u)),
        )
    }

    /// Infinity norm of the amount by which `x` leaves the box.
    pub fn violation(&self, x: &DVector<f64>) -> f64 {
        x.iter()
            .zip(self.lower.iter().zip(self.upper.iter()))
            .map(|(&xi, (&l, &u))| (l - xi).max(xi - u).max(0.0))
            .fold(0.0, f64::max)
    }

    pub fn contains(&self, x: &DVector<f64>, tol: f64) -> bool {
        x.len() == self.len() && self.violation(x) <= tol
    }

    /// Concatenate boxes in order.
    pub fn stack(parts: &[&Bounds]) -> Self {
        let lower: Vec<f64> = parts.iter().flat_map(|b| b.lower.iter().copied()).collect();
        let upper: Vec<f64> = parts.iter().flat_map(|b| b.upper.iter().copied()).collect();
        Self {
            lower: DVector::from_vec(lower),
            upper: DVector::from_vec(upper),
        }
    }
}

#[derive(Debug, Default)]
struct EvalCounters {
    objective: AtomicUsize,
    gradient: AtomicUsize,
    constraints: AtomicUsize,
    jacobian: AtomicUsize,
}

/// Snapshot of callback invocation counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct EvalCounts {
    pub objective: usize,
    pub gradient: usize,
    pub constraints: usize,
    pub jacobian: usize,
}

impl std::ops::Sub for EvalCounts {
    type Output = EvalCounts;

    fn sub(self, rhs: Self) -> Self {
        EvalCounts {
            objective: self.objective - rhs.objective,
            gradient: self.gradient - rhs.gradient,
            constraints: self.constraints - rhs.constraints,
            jacobian: self.jacobian - rhs.jacobian,
        }
    }
}

/// A smooth nonlinear program with dense first derivatives.
///
/// Cloning is cheap and clones share the evaluation counters.
#[derive(Clone)]
pub struct NlpProblem {
    n: usize,
    m_c: usize,
    objective: ScalarFn,
    gradient: VectorFn,
    constraints: VectorFn,
    jacobian: MatrixFn,
    linear: DMatrix<f64>,
    bounds_x: Bounds,
    bounds_c: Bounds,
    bounds_a: Bounds,
    x_tilde: DVector<f64>,
    counters: Arc<EvalCounters>,
}

impl fmt::Debug for NlpProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("NlpProblem")
            .field("n", &self.n)
            .field("m_c", &self.m_c)
            .field("m_a", &self.linear.nrows())
            .field("bounds_x", &self.bounds_x)
            .field("bounds_c", &self.bounds_c)
            .field("bounds_a", &self.bounds_a)
            .field("x_tilde", &self.x_tilde)
            .finish_non_exhaustive()
    }
}

impl NlpProblem {
    pub fn builder(n: usize) -> NlpBuilder {
        NlpBuilder::new(n)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m_c(&self) -> usize {
        self.m_c
    }

    pub fn m_a(&self) -> usize {
        self.linear.nrows()
    }

    pub fn linear(&self) -> &DMatrix<f64> {
        &self.linear
    }

    pub fn bounds_x(&self) -> &Bounds {
        &self.bounds_x
    }

    pub fn bounds_c(&self) -> &Bounds {
        &self.bounds_c
    }

    pub fn bounds_a(&self) -> &Bounds {
        &self.bounds_a
    }

    pub fn x_tilde(&self) -> &DVector<f64> {
        &self.x_tilde
    }

    /// Same problem with a different initial guess.
    pub fn with_start(&self, x_tilde: DVector<f64>) -> Result<Self, ModelError> {
        if x_tilde.len() != self.n {
            return Err(ModelError::DimensionMismatch {
                what: "initial guess",
                expected: self.n.to_string(),
                got: x_tilde.len().to_string(),
            });
        }
        Ok(Self {
            x_tilde,
            ..self.clone()
        })
    }

    pub fn eval_f(&self, x: &DVector<f64>) -> f64 {
        self.counters.objective.fetch_add(1, Ordering::Relaxed);
        (self.objective)(x)
    }

    pub fn eval_g(&self, x: &DVector<f64>) -> DVector<f64> {
        self.counters.gradient.fetch_add(1, Ordering::Relaxed);
        (self.gradient)(x)
    }

    pub fn eval_c(&self, x: &DVector<f64>) -> DVector<f64> {
        self.counters.constraints.fetch_add(1, Ordering::Relaxed);
        (self.constraints)(x)
    }

    pub fn eval_j(&self, x: &DVector<f64>) -> DMatrix<f64> {
        self.counters.jacobian.fetch_add(1, Ordering::Relaxed);
        (self.jacobian)(x)
    }

    pub fn eval_counts(&self) -> EvalCounts {
        EvalCounts {
            objective: self.counters.objective.load(Ordering::Relaxed),
            gradient: self.counters.gradient.load(Ordering::Relaxed),
            constraints: self.counters.constraints.load(Ordering::Relaxed),
            jacobian: self.counters.jacobian.load(Ordering::Relaxed),
        }
    }

    /// Largest violation of `l <= (x; c(x); Ax) <= u`.
    pub fn constraint_violation(&self, x: &DVector<f64>) -> f64 {
        let c = self.eval_c(x);
        let ax = &self.linear * x;
        self.bounds_x
            .violation(x)
            .max(self.bounds_c.violation(&c))
            .max(self.bounds_a.violation(&ax))
    }

    /// Evaluate every callback at `x_tilde` and check the returned shapes.
    pub fn validate_dimensions(&self) -> Result<(), ModelError> {
        let x = &self.x_tilde;
        let f = self.eval_f(x);
        if !f.is_finite() {
            return Err(ModelError::NonFinite("objective"));
        }
        let g = self.eval_g(x);
        check_dim("gradient", self.n, g.len())?;
        let c = self.eval_c(x);
        check_dim("constraint values", self.m_c, c.len())?;
        let j = self.eval_j(x);
        if j.nrows() != self.m_c || j.ncols() != self.n {
            return Err(ModelError::DimensionMismatch {
                what: "constraint Jacobian",
                expected: format!("{}x{}", self.m_c, self.n),
                got: format!("{}x{}", j.nrows(), j.ncols()),
            });
        }
        Ok(())
    }
}

fn check_dim(what: &'static str, expected: usize, got: usize) -> Result<(), ModelError> {
    if expected != got {
        return Err(ModelError::DimensionMismatch {
            what,
            expected: expected.to_string(),
            got: got.to_string(),
        });
    }
    Ok(())
}

pub struct NlpBuilder {
    n: usize,
    objective: Option<(ScalarFn, VectorFn)>,
    nonlinear: Option<(usize, VectorFn, MatrixFn, Vec<f64>, Vec<f64>)>,
    linear: Option<(DMatrix<f64>, Vec<f64>, Vec<f64>)>,
    bounds_x: Option<(Vec<f64>, Vec<f64>)>,
    x_tilde: Option<Vec<f64>>,
}

impl NlpBuilder {
    fn new(n: usize) -> Self {
        Self {
            n,
            objective: None,
            nonlinear: None,
            linear: None,
            bounds_x: None,
            x_tilde: None,
        }
    }

    pub fn objective<F, G>(mut self, f: F, g: G) -> Self
    where
        F: Fn(&DVector<f64>) -> f64 + Send + Sync + 'static,
        G: Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
    {
        self.objective = Some((Arc::new(f), Arc::new(g)));
        self
    }

    pub fn nonlinear_rows<C, J>(
        mut self,
        m_c: usize,
        c: C,
        jac: J,
        lower: Vec<f64>,
        upper: Vec<f64>,
    ) -> Self
    where
        C: Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
        J: Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static,
    {
        self.nonlinear = Some((m_c, Arc::new(c), Arc::new(jac), lower, upper));
        self
    }

    pub fn linear_rows(mut self, a: DMatrix<f64>, lower: Vec<f64>, upper: Vec<f64>) -> Self {
        self.linear = Some((a, lower, upper));
        self
    }

    pub fn variable_bounds(mut self, lower: Vec<f64>, upper: Vec<f64>) -> Self {
        self.bounds_x = Some((lower, upper));
        self
    }

    pub fn start(mut self, x: Vec<f64>) -> Self {
        self.x_tilde = Some(x);
        self
    }

    pub fn build(self) -> Result<NlpProblem, ModelError> {
        let n = self.n;
        let (objective, gradient) = self
            .objective
            .ok_or(ModelError::MissingCallback("objective"))?;

        let (m_c, constraints, jacobian, bounds_c): (usize, VectorFn, MatrixFn, Bounds) =
            match self.nonlinear {
                Some((m_c, c, j, lo, up)) => {
                    check_dim("nonlinear row bounds", m_c, lo.len())?;
                    (m_c, c, j, Bounds::from_vecs(lo, up)?)
                }
                None => (
                    0,
                    Arc::new(|_: &DVector<f64>| DVector::zeros(0)),
                    Arc::new(move |_: &DVector<f64>| DMatrix::zeros(0, n)),
                    Bounds::free(0),
                ),
            };

        let (linear, bounds_a) = match self.linear {
            Some((a, lo, up)) => {
                if a.ncols() != n {
                    return Err(ModelError::DimensionMismatch {
                        what: "linear constraint matrix columns",
                        expected: n.to_string(),
                        got: a.ncols().to_string(),
                    });
                }
                check_dim("linear row bounds", a.nrows(), lo.len())?;
                (a, Bounds::from_vecs(lo, up)?)
            }
            None => (DMatrix::zeros(0, n), Bounds::free(0)),
        };

        let bounds_x = match self.bounds_x {
            Some((lo, up)) => {
                check_dim("variable bounds", n, lo.len())?;
                Bounds::from_vecs(lo, up)?
            }
            None => Bounds::free(n),
        };

        let x_tilde = DVector::from_vec(self.x_tilde.unwrap_or_else(|| vec![0.0; n]));
        check_dim("initial guess", n, x_tilde.len())?;

        Ok(NlpProblem {
            n,
            m_c,
            objective,
            gradient,
            constraints,
            jacobian,
            linear,
            bounds_x,
            bounds_c,
            bounds_a,
            x_tilde,
            counters: Arc::new(EvalCounters::default()),
        })
    }
}

/// Function values and first derivatives of the slack form at one point.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub f: f64,
    /// Objective gradient over the extended vector (zero on slacks).
    pub grad: DVector<f64>,
    /// Equality residual `(c(x) - s_c; Ax - s_A)`.
    pub c: DVector<f64>,
    /// Jacobian of the equality residual, `m x n_ext`.
    pub jac: DMatrix<f64>,
}

/// The equality-plus-box reformulation over `(x, s_c, s_A)`.
#[derive(Debug, Clone)]
pub struct SlackForm {
    nlp: NlpProblem,
    bounds: Bounds,
}

/// Build the slack form; evaluates every callback once at `x_tilde` to check shapes.
pub fn build_slack_form(problem: &NlpProblem) -> Result<SlackForm, ModelError> {
    problem.validate_dimensions()?;
    let bounds = Bounds::stack(&[problem.bounds_x(), problem.bounds_c(), problem.bounds_a()]);
    Ok(SlackForm {
        nlp: problem.clone(),
        bounds,
    })
}

impl SlackForm {
    pub fn problem(&self) -> &NlpProblem {
        &self.nlp
    }

    pub fn n(&self) -> usize {
        self.nlp.n()
    }

    pub fn m_c(&self) -> usize {
        self.nlp.m_c()
    }

    pub fn m_a(&self) -> usize {
        self.nlp.m_a()
    }

    /// Number of equality rows (nonlinear rows first).
    pub fn m(&self) -> usize {
        self.m_c() + self.m_a()
    }

    pub fn n_ext(&self) -> usize {
        self.n() + self.m()
    }

    pub fn bounds(&self) -> &Bounds {
        &self.bounds
    }

    pub fn x_part<'a>(&self, x_ext: &'a DVector<f64>) -> DVectorView<'a, f64> {
        x_ext.rows(0, self.n())
    }

    pub fn slack_c<'a>(&self, x_ext: &'a DVector<f64>) -> DVectorView<'a, f64> {
        x_ext.rows(self.n(), self.m_c())
    }

    pub fn slack_a<'a>(&self, x_ext: &'a DVector<f64>) -> DVectorView<'a, f64> {
        x_ext.rows(self.n() + self.m_c(), self.m_a())
    }

    /// Extended point at `x` with each slack set to the projection of its row value.
    pub fn extend(&self, x: &DVector<f64>) -> DVector<f64> {
        let sc = self.nlp.bounds_c().project(&self.nlp.eval_c(x));
        let sa = self.nlp.bounds_a().project(&(self.nlp.linear() * x));
        let mut out = DVector::zeros(self.n_ext());
        out.rows_mut(0, self.n()).copy_from(x);
        out.rows_mut(self.n(), self.m_c()).copy_from(&sc);
        out.rows_mut(self.n() + self.m_c(), self.m_a()).copy_from(&sa);
        out
    }

    /// Extended point from explicit parts.
    pub fn join(&self, x: &DVector<f64>, s_c: &DVector<f64>, s_a: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.n_ext());
        out.rows_mut(0, self.n()).copy_from(x);
        out.rows_mut(self.n(), self.m_c()).copy_from(s_c);
        out.rows_mut(self.n() + self.m_c(), self.m_a()).copy_from(s_a);
        out
    }

    pub fn objective(&self, x_ext: &DVector<f64>) -> Result<f64, ModelError> {
        let f = self.nlp.eval_f(&self.x_part(x_ext).into_owned());
        if !f.is_finite() {
            return Err(ModelError::NonFinite("objective"));
        }
        Ok(f)
    }

    /// Equality residual only (no derivatives).
    pub fn residual(&self, x_ext: &DVector<f64>) -> Result<DVector<f64>, ModelError> {
        let x = self.x_part(x_ext).into_owned();
        let c = self.nlp.eval_c(&x);
        if c.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::NonFinite("constraints"));
        }
        Ok(self.assemble_residual(&x, &c, x_ext))
    }

    fn assemble_residual(&self, x: &DVector<f64>, c: &DVector<f64>, x_ext: &DVector<f64>) -> DVector<f64> {
        let mut r = DVector::zeros(self.m());
        r.rows_mut(0, self.m_c()).copy_from(&(c - self.slack_c(x_ext)));
        let ax = self.nlp.linear() * x;
        r.rows_mut(self.m_c(), self.m_a()).copy_from(&(ax - self.slack_a(x_ext)));
        r
    }

    pub fn evaluate(&self, x_ext: &DVector<f64>) -> Result<Evaluation, ModelError> {
        let (n, m_c, m_a) = (self.n(), self.m_c(), self.m_a());
        let x = self.x_part(x_ext).into_owned();
        let f = self.nlp.eval_f(&x);
        if !f.is_finite() {
            return Err(ModelError::NonFinite("objective"));
        }
        let g = self.nlp.eval_g(&x);
        if g.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::NonFinite("gradient"));
        }
        let c = self.nlp.eval_c(&x);
        if c.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::NonFinite("constraints"));
        }
        let j = self.nlp.eval_j(&x);
        if j.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::NonFinite("Jacobian"));
        }

        let mut grad = DVector::zeros(self.n_ext());
        grad.rows_mut(0, n).copy_from(&g);

        let mut jac = DMatrix::zeros(self.m(), self.n_ext());
        jac.view_mut((0, 0), (m_c, n)).copy_from(&j);
        jac.view_mut((m_c, 0), (m_a, n)).copy_from(self.nlp.linear());
        for i in 0..m_c {
            jac[(i, n + i)] = -1.0;
        }
        for i in 0..m_a {
            jac[(m_c + i, n + m_c + i)] = -1.0;
        }

        let c = self.assemble_residual(&x, &c, x_ext);
        Ok(Evaluation { f, grad, c, jac })
    }

    /// Bound violation of the nonlinear rows `c(x)` of the original problem.
    pub fn nonlinear_violation(&self, x_ext: &DVector<f64>) -> f64 {
        let x = self.x_part(x_ext).into_owned();
        self.nlp.bounds_c().violation(&self.nlp.eval_c(&x))
    }

    /// Mask of equality rows that come from nonlinear constraints.
    pub fn nonlinear_rows(&self) -> Vec<bool> {
        (0..self.m()).map(|i| i < self.m_c()).collect()
    }
}
