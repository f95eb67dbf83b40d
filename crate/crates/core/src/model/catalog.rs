//! Small analytic test problems with known solutions.
//!
//! Most entries are taken from the Hock–Schittkowski collection; the rest are
//! constructed so that their optimum (or their failure mode) is known in closed
//! form.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::{ModelError, NlpProblem};

const INF: f64 = f64::INFINITY;

/// Feasibility tolerance for registered solutions.
const KNOWN_X_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Classification {
    Solvable,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone)]
pub struct CatalogEntry {
    pub name: &'static str,
    pub problem: NlpProblem,
    pub known_objective: Option<f64>,
    /// Optimal point for solvable entries; least-squares point for infeasible ones.
    pub known_x: Option<DVector<f64>>,
    /// Multipliers of the nonlinear rows at `known_x`, when unique.
    pub known_y: Option<DVector<f64>>,
    /// Minimum of `||c(x)||` over the box for infeasible entries.
    pub min_residual: Option<f64>,
    pub classification: Classification,
    /// Convex objective and convex feasible region.
    pub convex: bool,
}

impl CatalogEntry {
    fn solvable(name: &'static str, problem: NlpProblem, known_objective: f64) -> Self {
        Self {
            name,
            problem,
            known_objective: Some(known_objective),
            known_x: None,
            known_y: None,
            min_residual: None,
            classification: Classification::Solvable,
            convex: false,
        }
    }

    fn with_x(mut self, x: &[f64]) -> Self {
        self.known_x = Some(DVector::from_row_slice(x));
        self
    }

    fn with_y(mut self, y: &[f64]) -> Self {
        self.known_y = Some(DVector::from_row_slice(y));
        self
    }

    fn convex(mut self) -> Self {
        self.convex = true;
        self
    }

    /// Check that `known_x` satisfies every constraint to `1e-8` (solvable entries only).
    pub fn verify_known_solution(&self) -> Result<(), ModelError> {
        if self.classification != Classification::Solvable {
            return Ok(());
        }
        if let Some(x) = &self.known_x {
            let violation = self.problem.constraint_violation(x);
            if violation > KNOWN_X_TOL {
                return Err(ModelError::KnownSolutionInfeasible {
                    name: self.name.to_string(),
                    violation,
                });
            }
        }
        Ok(())
    }
}

fn v(xs: &[f64]) -> DVector<f64> {
    DVector::from_row_slice(xs)
}

fn row_matrix(rows: usize, cols: usize, data: &[f64]) -> DMatrix<f64> {
    DMatrix::from_row_slice(rows, cols, data)
}

type Builder = fn() -> CatalogEntry;

const REGISTRY: &[(&str, Builder)] = &[
    ("circle-proj", circle_proj),
    ("linear-as-nl", linear_as_nl),
    ("infeas-affine", infeas_affine),
    ("unbounded-ray", unbounded_ray),
    ("hs006", hs006),
    ("hs007", hs007),
    ("hs009", hs009),
    ("hs012", hs012),
    ("hs014", hs014),
    ("hs027", hs027),
    ("hs028", hs028),
    ("hs035", hs035),
    ("hs039", hs039),
    ("hs040", hs040),
    ("hs043", hs043),
    ("hs065", hs065),
    ("hs071", hs071),
    ("hs079", hs079),
    ("quad-bound", quad_bound),
];

pub fn catalog_names() -> Vec<&'static str> {
    REGISTRY.iter().map(|(name, _)| *name).collect()
}

pub fn catalog_get(name: &str) -> Result<CatalogEntry, ModelError> {
    let (_, build) = REGISTRY
        .iter()
        .find(|(n, _)| *n == name)
        .ok_or_else(|| ModelError::UnknownProblem(name.to_string()))?;
    let entry = build();
    entry.verify_known_solution()?;
    Ok(entry)
}

pub fn catalog() -> Vec<CatalogEntry> {
    REGISTRY
        .iter()
        .map(|(name, _)| catalog_get(name).expect("registered catalog entry"))
        .collect()
}

// min (x1-2)^2 + (x2-1)^2  s.t.  x1^2 + x2^2 = 1, x >= 0
fn circle_proj() -> CatalogEntry {
    let p = NlpProblem::builder(2)
        .objective(
            |x| (x[0] - 2.0).powi(2) + (x[1] - 1.0).powi(2),
            |x| v(&[2.0 * (x[0] - 2.0), 2.0 * (x[1] - 1.0)]),
        )
        .nonlinear_rows(
            1,
            |x| v(&[x[0] * x[0] + x[1] * x[1] - 1.0]),
            |x| row_matrix(1, 2, &[2.0 * x[0], 2.0 * x[1]]),
            vec![0.0],
            vec![0.0],
        )
        .variable_bounds(vec![0.0, 0.0], vec![INF, INF])
        .start(vec![1.0, 1.0])
        .build()
        .unwrap();
    let s5 = 5f64.sqrt();
    CatalogEntry::solvable("circle-proj", p, (s5 - 1.0).powi(2))
        .with_x(&[2.0 / s5, 1.0 / s5])
        .with_y(&[1.0 - s5])
}

// min x1^2 + x2^2  s.t.  x1 + x2 - 2 = 0 (declared nonlinear), x >= 0
fn linear_as_nl() -> CatalogEntry {
    let p = NlpProblem::builder(2)
        .objective(
            |x| x[0] * x[0] + x[1] * x[1],
            |x| v(&[2.0 * x[0], 2.0 * x[1]]),
        )
        .nonlinear_rows(
            1,
            |x| v(&[x[0] + x[1] - 2.0]),
            |_| row_matrix(1, 2, &[1.0, 1.0]),
            vec![0.0],
            vec![0.0],
        )
        .variable_bounds(vec![0.0, 0.0], vec![INF, INF])
        .start(vec![0.0, 0.0])
        .build()
        .unwrap();
    CatalogEntry::solvable("linear-as-nl", p, 2.0)
        .with_x(&[1.0, 1.0])
        .with_y(&[2.0])
        .convex()
}

// x1 + x2 + 1 = 0 has no solution with x >= 0
fn infeas_affine() -> CatalogEntry {
    let p = NlpProblem::builder(2)
        .objective(
            |x| x[0] * x[0] + x[1] * x[1],
            |x| v(&[2.0 * x[0], 2.0 * x[1]]),
        )
        .nonlinear_rows(
            1,
            |x| v(&[x[0] + x[1] + 1.0]),
            |_| row_matrix(1, 2, &[1.0, 1.0]),
            vec![0.0],
            vec![0.0],
        )
        .variable_bounds(vec![0.0, 0.0], vec![INF, INF])
        .start(vec![1.0, 1.0])
        .build()
        .unwrap();
    CatalogEntry {
        name: "infeas-affine",
        problem: p,
        known_objective: None,
        known_x: Some(v(&[0.0, 0.0])),
        known_y: None,
        min_residual: Some(1.0),
        classification: Classification::Infeasible,
        convex: true,
    }
}

// min -x1  s.t.  x2^2 = 0, x >= 0: descent ray along e1
fn unbounded_ray() -> CatalogEntry {
    let p = NlpProblem::builder(2)
        .objective(|x| -x[0], |_| v(&[-1.0, 0.0]))
        .nonlinear_rows(
            1,
            |x| v(&[x[1] * x[1]]),
            |x| row_matrix(1, 2, &[0.0, 2.0 * x[1]]),
            vec![0.0],
            vec![0.0],
        )
        .variable_bounds(vec![0.0, 0.0], vec![INF, INF])
        .start(vec![1.0, 0.0])
        .build()
        .unwrap();
    CatalogEntry {
        name: "unbounded-ray",
        problem: p,
        known_objective: None,
        known_x: None,
        known_y: None,
        min_residual: None,
        classification: Classification::Unbounded,
        convex: false,
    }
}

fn hs006() -> CatalogEntry {
    let p = NlpProblem::builder(2)
        .objective(|x| (1.0 - x[0]).powi(2), |x| v(&[-2.0 * (1.0 - x[0]), 0.0]))
        .nonlinear_rows(
            1,
            |x| v(&[10.0 * (x[1] - x[0] * x[0])]),
            |x| row_matrix(1, 2, &[-20.0 * x[0], 10.0]),
            vec![0.0],
            vec![0.0],
        )
        .start(vec![-1.2, 1.0])
        .build()
        .unwrap();
    CatalogEntry::solvable("hs006", p, 0.0).with_x(&[1.0, 1.0]).with_y(&[0.0])
}

fn hs007() -> CatalogEntry {
    let p = NlpProblem::builder(2)
        .objective(
            |x| (1.0 + x[0] * x[0]).ln() - x[1],
            |x| v(&[2.0 * x[0] / (1.0 + x[0] * x[0]), -1.0]),
        )
        .nonlinear_rows(
            1,
            |x| v(&[(1.0 + x[0] * x[0]).powi(2) + x[1] * x[1] - 4.0]),
            |x| row_matrix(1, 2, &[4.0 * x[0] * (1.0 + x[0] * x[0]), 2.0 * x[1]]),
            vec![0.0],
            vec![0.0],
        )
        .start(vec![2.0, 2.0])
        .build()
        .unwrap();
    let s3 = 3f64.sqrt();
    CatalogEntry::solvable("hs007", p, -s3)
        .with_x(&[0.0, s3])
        .with_y(&[-1.0 / (2.0 * s3)])
}

// periodic objective over the line 4 x1 = 3 x2; every local minimizer has f = -1/2
fn hs009() -> CatalogEntry {
    let p = NlpProblem::builder(2)
        .objective(
            |x| (PI * x[0] / 12.0).sin() * (PI * x[1] / 16.0).cos(),
            |x| {
                let (a, b) = (PI * x[0] / 12.0, PI * x[1] / 16.0);
                v(&[
                    PI / 12.0 * a.cos() * b.cos(),
                    -PI / 16.0 * a.sin() * b.sin(),
                ])
            },
        )
        .linear_rows(row_matrix(1, 2, &[4.0, -3.0]), vec![0.0], vec![0.0])
        .start(vec![0.0, 0.0])
        .build()
        .unwrap();
    CatalogEntry::solvable("hs009", p, -0.5).with_x(&[-3.0, -4.0])
}

fn hs012() -> CatalogEntry {
    let p = NlpProblem::builder(2)
        .objective(
            |x| 0.5 * x[0] * x[0] + x[1] * x[1] - x[0] * x[1] - 7.0 * x[0] - 7.0 * x[1],
            |x| v(&[x[0] - x[1] - 7.0, 2.0 * x[1] - x[0] - 7.0]),
        )
        .nonlinear_rows(
            1,
            |x| v(&[4.0 * x[0] * x[0] + x[1] * x[1]]),
            |x| row_matrix(1, 2, &[8.0 * x[0], 2.0 * x[1]]),
            vec![-INF],
            vec![25.0],
        )
        .start(vec![0.0, 0.0])
        .build()
        .unwrap();
    CatalogEntry::solvable("hs012", p, -30.0)
        .with_x(&[2.0, 3.0])
        .with_y(&[-0.5])
        .convex()
}

fn hs014() -> CatalogEntry {
    let p = NlpProblem::builder(2)
        .objective(
            |x| (x[0] - 2.0).powi(2) + (x[1] - 1.0).powi(2),
            |x| v(&[2.0 * (x[0] - 2.0), 2.0 * (x[1] - 1.0)]),
        )
        .nonlinear_rows(
            1,
            |x| v(&[0.25 * x[0] * x[0] + x[1] * x[1]]),
            |x| row_matrix(1, 2, &[0.5 * x[0], 2.0 * x[1]]),
            vec![-INF],
            vec![1.0],
        )
        .linear_rows(row_matrix(1, 2, &[1.0, -2.0]), vec![-1.0], vec![-1.0])
        .start(vec![2.0, 2.0])
        .build()
        .unwrap();
    let s7 = 7f64.sqrt();
    CatalogEntry::solvable("hs014", p, 9.0 - 2.875 * s7)
        .with_x(&[0.5 * (s7 - 1.0), 0.25 * (s7 + 1.0)])
        .convex()
}

fn hs027() -> CatalogEntry {
    let p = NlpProblem::builder(3)
        .objective(
            |x| 0.01 * (x[0] - 1.0).powi(2) + (x[1] - x[0] * x[0]).powi(2),
            |x| {
                let d = x[1] - x[0] * x[0];
                v(&[0.02 * (x[0] - 1.0) - 4.0 * x[0] * d, 2.0 * d, 0.0])
            },
        )
        .nonlinear_rows(
            1,
            |x| v(&[x[0] + x[2] * x[2] + 1.0]),
            |x| row_matrix(1, 3, &[1.0, 0.0, 2.0 * x[2]]),
            vec![0.0],
            vec![0.0],
        )
        .start(vec![2.0, 2.0, 2.0])
        .build()
        .unwrap();
    CatalogEntry::solvable("hs027", p, 0.04)
        .with_x(&[-1.0, 1.0, 0.0])
        .with_y(&[-0.04])
}

fn hs028() -> CatalogEntry {
    let p = NlpProblem::builder(3)
        .objective(
            |x| (x[0] + x[1]).powi(2) + (x[1] + x[2]).powi(2),
            |x| {
                let (a, b) = (x[0] + x[1], x[1] + x[2]);
                v(&[2.0 * a, 2.0 * a + 2.0 * b, 2.0 * b])
            },
        )
        .linear_rows(row_matrix(1, 3, &[1.0, 2.0, 3.0]), vec![1.0], vec![1.0])
        .start(vec![-4.0, 1.0, 1.0])
        .build()
        .unwrap();
    CatalogEntry::solvable("hs028", p, 0.0)
        .with_x(&[0.5, -0.5, 0.5])
        .convex()
}

fn hs035() -> CatalogEntry {
    let p = NlpProblem::builder(3)
        .objective(
            |x| {
                9.0 - 8.0 * x[0] - 6.0 * x[1] - 4.0 * x[2]
                    + 2.0 * x[0] * x[0]
                    + 2.0 * x[1] * x[1]
                    + x[2] * x[2]
                    + 2.0 * x[0] * x[1]
                    + 2.0 * x[0] * x[2]
            },
            |x| {
                v(&[
                    -8.0 + 4.0 * x[0] + 2.0 * x[1] + 2.0 * x[2],
                    -6.0 + 4.0 * x[1] + 2.0 * x[0],
                    -4.0 + 2.0 * x[2] + 2.0 * x[0],
                ])
            },
        )
        .linear_rows(row_matrix(1, 3, &[1.0, 1.0, 2.0]), vec![-INF], vec![3.0])
        .variable_bounds(vec![0.0; 3], vec![INF; 3])
        .start(vec![0.5, 0.5, 0.5])
        .build()
        .unwrap();
    CatalogEntry::solvable("hs035", p, 1.0 / 9.0)
        .with_x(&[4.0 / 3.0, 7.0 / 9.0, 4.0 / 9.0])
        .convex()
}

fn hs039() -> CatalogEntry {
    let p = NlpProblem::builder(4)
        .objective(|x| -x[0], |_| v(&[-1.0, 0.0, 0.0, 0.0]))
        .nonlinear_rows(
            2,
            |x| {
                v(&[
                    x[1] - x[0].powi(3) - x[2] * x[2],
                    x[0] * x[0] - x[1] - x[3] * x[3],
                ])
            },
            |x| {
                row_matrix(
                    2,
                    4,
                    &[
                        -3.0 * x[0] * x[0],
                        1.0,
                        -2.0 * x[2],
                        0.0,
                        2.0 * x[0],
                        -1.0,
                        0.0,
                        -2.0 * x[3],
                    ],
                )
            },
            vec![0.0, 0.0],
            vec![0.0, 0.0],
        )
        .start(vec![2.0; 4])
        .build()
        .unwrap();
    CatalogEntry::solvable("hs039", p, -1.0)
        .with_x(&[1.0, 1.0, 0.0, 0.0])
        .with_y(&[1.0, 1.0])
}

fn hs040() -> CatalogEntry {
    let p = NlpProblem::builder(4)
        .objective(
            |x| -x[0] * x[1] * x[2] * x[3],
            |x| {
                v(&[
                    -x[1] * x[2] * x[3],
                    -x[0] * x[2] * x[3],
                    -x[0] * x[1] * x[3],
                    -x[0] * x[1] * x[2],
                ])
            },
        )
        .nonlinear_rows(
            3,
            |x| {
                v(&[
                    x[0].powi(3) + x[1] * x[1] - 1.0,
                    x[0] * x[0] * x[3] - x[2],
                    x[3] * x[3] - x[1],
                ])
            },
            |x| {
                row_matrix(
                    3,
                    4,
                    &[
                        3.0 * x[0] * x[0],
                        2.0 * x[1],
                        0.0,
                        0.0,
                        2.0 * x[0] * x[3],
                        0.0,
                        -1.0,
                        x[0] * x[0],
                        0.0,
                        -1.0,
                        0.0,
                        2.0 * x[3],
                    ],
                )
            },
            vec![0.0; 3],
            vec![0.0; 3],
        )
        .start(vec![0.8; 4])
        .build()
        .unwrap();
    let two = 2f64;
    CatalogEntry::solvable("hs040", p, -0.25).with_x(&[
        two.powf(-1.0 / 3.0),
        two.powf(-0.5),
        two.powf(-11.0 / 12.0),
        two.powf(-0.25),
    ])
}

// Rosen–Suzuki
fn hs043() -> CatalogEntry {
    let p = NlpProblem::builder(4)
        .objective(
            |x| {
                x[0] * x[0] + x[1] * x[1] + 2.0 * x[2] * x[2] + x[3] * x[3] - 5.0 * x[0] - 5.0 * x[1]
                    - 21.0 * x[2]
                    + 7.0 * x[3]
            },
            |x| v(&[2.0 * x[0] - 5.0, 2.0 * x[1] - 5.0, 4.0 * x[2] - 21.0, 2.0 * x[3] + 7.0]),
        )
        .nonlinear_rows(
            3,
            |x| {
                let sq: f64 = x.iter().map(|t| t * t).sum();
                v(&[
                    sq + x[0] - x[1] + x[2] - x[3],
                    x[0] * x[0] + 2.0 * x[1] * x[1] + x[2] * x[2] + 2.0 * x[3] * x[3] - x[0] - x[3],
                    2.0 * x[0] * x[0] + x[1] * x[1] + x[2] * x[2] + 2.0 * x[0] - x[1] - x[3],
                ])
            },
            |x| {
                row_matrix(
                    3,
                    4,
                    &[
                        2.0 * x[0] + 1.0,
                        2.0 * x[1] - 1.0,
                        2.0 * x[2] + 1.0,
                        2.0 * x[3] - 1.0,
                        2.0 * x[0] - 1.0,
                        4.0 * x[1],
                        2.0 * x[2],
                        4.0 * x[3] - 1.0,
                        4.0 * x[0] + 2.0,
                        2.0 * x[1] - 1.0,
                        2.0 * x[2],
                        -1.0,
                    ],
                )
            },
            vec![-INF; 3],
            vec![8.0, 10.0, 5.0],
        )
        .start(vec![0.0; 4])
        .build()
        .unwrap();
    CatalogEntry::solvable("hs043", p, -44.0)
        .with_x(&[0.0, 1.0, 2.0, -1.0])
        .with_y(&[-1.0, 0.0, -2.0])
        .convex()
}

fn hs065() -> CatalogEntry {
    let p = NlpProblem::builder(3)
        .objective(
            |x| (x[0] - x[1]).powi(2) + (x[0] + x[1] - 10.0).powi(2) / 9.0 + (x[2] - 5.0).powi(2),
            |x| {
                let (a, b) = (x[0] - x[1], (x[0] + x[1] - 10.0) / 9.0);
                v(&[2.0 * a + 2.0 * b, -2.0 * a + 2.0 * b, 2.0 * (x[2] - 5.0)])
            },
        )
        .nonlinear_rows(
            1,
            |x| v(&[x[0] * x[0] + x[1] * x[1] + x[2] * x[2]]),
            |x| row_matrix(1, 3, &[2.0 * x[0], 2.0 * x[1], 2.0 * x[2]]),
            vec![-INF],
            vec![48.0],
        )
        .variable_bounds(vec![-4.5, -4.5, -5.0], vec![4.5, 4.5, 5.0])
        .start(vec![-5.0, 5.0, 0.0])
        .build()
        .unwrap();
    CatalogEntry::solvable("hs065", p, 0.953_528_856_7).convex()
}

fn hs071() -> CatalogEntry {
    let p = NlpProblem::builder(4)
        .objective(
            |x| x[0] * x[3] * (x[0] + x[1] + x[2]) + x[2],
            |x| {
                v(&[
                    x[3] * (2.0 * x[0] + x[1] + x[2]),
                    x[0] * x[3],
                    x[0] * x[3] + 1.0,
                    x[0] * (x[0] + x[1] + x[2]),
                ])
            },
        )
        .nonlinear_rows(
            2,
            |x| v(&[x[0] * x[1] * x[2] * x[3], x.iter().map(|t| t * t).sum()]),
            |x| {
                row_matrix(
                    2,
                    4,
                    &[
                        x[1] * x[2] * x[3],
                        x[0] * x[2] * x[3],
                        x[0] * x[1] * x[3],
                        x[0] * x[1] * x[2],
                        2.0 * x[0],
                        2.0 * x[1],
                        2.0 * x[2],
                        2.0 * x[3],
                    ],
                )
            },
            vec![25.0, 40.0],
            vec![INF, 40.0],
        )
        .variable_bounds(vec![1.0; 4], vec![5.0; 4])
        .start(vec![1.0, 5.0, 5.0, 1.0])
        .build()
        .unwrap();
    CatalogEntry::solvable("hs071", p, 17.014_017_289_1)
}

fn hs079() -> CatalogEntry {
    let s2 = 2f64.sqrt();
    let p = NlpProblem::builder(5)
        .objective(
            |x| {
                (x[0] - 1.0).powi(2)
                    + (x[0] - x[1]).powi(2)
                    + (x[1] - x[2]).powi(2)
                    + (x[2] - x[3]).powi(4)
                    + (x[3] - x[4]).powi(4)
            },
            |x| {
                let (a, b, c, d) = (x[0] - x[1], x[1] - x[2], x[2] - x[3], x[3] - x[4]);
                v(&[
                    2.0 * (x[0] - 1.0) + 2.0 * a,
                    -2.0 * a + 2.0 * b,
                    -2.0 * b + 4.0 * c.powi(3),
                    -4.0 * c.powi(3) + 4.0 * d.powi(3),
                    -4.0 * d.powi(3),
                ])
            },
        )
        .nonlinear_rows(
            3,
            move |x| {
                v(&[
                    x[0] + x[1] * x[1] + x[2].powi(3) - 2.0 - 3.0 * s2,
                    x[1] - x[2] * x[2] + x[3] + 2.0 - 2.0 * s2,
                    x[0] * x[4] - 2.0,
                ])
            },
            |x| {
                row_matrix(
                    3,
                    5,
                    &[
                        1.0,
                        2.0 * x[1],
                        3.0 * x[2] * x[2],
                        0.0,
                        0.0,
                        0.0,
                        1.0,
                        -2.0 * x[2],
                        1.0,
                        0.0,
                        x[4],
                        0.0,
                        0.0,
                        0.0,
                        x[0],
                    ],
                )
            },
            vec![0.0; 3],
            vec![0.0; 3],
        )
        .start(vec![2.0; 5])
        .build()
        .unwrap();
    CatalogEntry::solvable("hs079", p, 0.078_776_820_85)
}

// inactive disc constraint, active lower bound on x2
fn quad_bound() -> CatalogEntry {
    let p = NlpProblem::builder(2)
        .objective(
            |x| (x[0] - 1.0).powi(2) + (x[1] + 1.0).powi(2),
            |x| v(&[2.0 * (x[0] - 1.0), 2.0 * (x[1] + 1.0)]),
        )
        .nonlinear_rows(
            1,
            |x| v(&[x[0] * x[0] + x[1] * x[1]]),
            |x| row_matrix(1, 2, &[2.0 * x[0], 2.0 * x[1]]),
            vec![-INF],
            vec![4.0],
        )
        .variable_bounds(vec![0.0, 0.0], vec![INF, INF])
        .start(vec![1.0, 1.0])
        .build()
        .unwrap();
    CatalogEntry::solvable("quad-bound", p, 1.0)
        .with_x(&[1.0, 0.0])
        .with_y(&[0.0])
        .convex()
}
