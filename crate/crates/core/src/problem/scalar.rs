//! Small closed-form systems used as oracles.

use super::{Parameters, Problem};
use crate::linalg::SparseMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ScalarKind {
    /// `q^2 + a1`
    Fold,
    /// `q^3 - a1 q`
    Pitchfork,
    /// `q^3 + a2 q + a1`
    Cusp,
}

/// Scalar polynomial normal-form systems with `M = 1`.
#[derive(Debug, Clone)]
pub struct ScalarPoly {
    kind: ScalarKind,
}

impl ScalarPoly {
    pub fn fold() -> Self {
        Self { kind: ScalarKind::Fold }
    }

    pub fn pitchfork() -> Self {
        Self { kind: ScalarKind::Pitchfork }
    }

    pub fn cusp() -> Self {
        Self { kind: ScalarKind::Cusp }
    }

    fn d1(&self, q: f64, p: &Parameters) -> f64 {
        match self.kind {
            ScalarKind::Fold => 2.0 * q,
            ScalarKind::Pitchfork => 3.0 * q * q - p.value(0),
            ScalarKind::Cusp => 3.0 * q * q + p.value(1),
        }
    }

    fn d2(&self, q: f64) -> f64 {
        match self.kind {
            ScalarKind::Fold => 2.0,
            _ => 6.0 * q,
        }
    }

    fn d3(&self) -> f64 {
        match self.kind {
            ScalarKind::Fold => 0.0,
            _ => 6.0,
        }
    }
}

fn scalar(v: f64) -> SparseMatrix {
    SparseMatrix::from_diagonal(&[v])
}

impl Problem for ScalarPoly {
    fn name(&self) -> &str {
        match self.kind {
            ScalarKind::Fold => "scalar_fold",
            ScalarKind::Pitchfork => "scalar_pitchfork",
            ScalarKind::Cusp => "scalar_cusp",
        }
    }

    fn dim(&self) -> usize {
        1
    }

    fn default_parameters(&self) -> Parameters {
        match self.kind {
            ScalarKind::Fold => Parameters::new([("a1", -1.0)], 0).unwrap(),
            ScalarKind::Pitchfork => Parameters::new([("a1", -1.0)], 0).unwrap(),
            ScalarKind::Cusp => Parameters::new([("a1", 0.0), ("a2", -1.0)], 0).unwrap(),
        }
    }

    fn initial_guess(&self, p: &Parameters) -> Vec<f64> {
        match self.kind {
            ScalarKind::Fold => vec![(-p.value(0)).max(0.0).sqrt()],
            _ => vec![0.0],
        }
    }

    fn polynomial_degree(&self) -> Option<u32> {
        Some(match self.kind {
            ScalarKind::Fold => 2,
            _ => 3,
        })
    }

    fn residual(&self, q: &[f64], p: &Parameters) -> Vec<f64> {
        let x = q[0];
        vec![match self.kind {
            ScalarKind::Fold => x * x + p.value(0),
            ScalarKind::Pitchfork => x * x * x - p.value(0) * x,
            ScalarKind::Cusp => x * x * x + p.value(1) * x + p.value(0),
        }]
    }

    fn jacobian(&self, q: &[f64], p: &Parameters) -> SparseMatrix {
        scalar(self.d1(q[0], p))
    }

    fn param_gradient(&self, q: &[f64], _p: &Parameters, j: usize) -> Vec<f64> {
        vec![match (self.kind, j) {
            (ScalarKind::Fold, 0) => 1.0,
            (ScalarKind::Pitchfork, 0) => -q[0],
            (ScalarKind::Cusp, 0) => 1.0,
            (ScalarKind::Cusp, 1) => q[0],
            _ => panic!("parameter index {j} out of range"),
        }]
    }

    fn hessian_apply(&self, q: &[f64], _p: &Parameters, u: &[f64], v: &[f64]) -> Vec<f64> {
        vec![self.d2(q[0]) * u[0] * v[0]]
    }

    fn third_apply(&self, _q: &[f64], _p: &Parameters, u: &[f64], v: &[f64], w: &[f64]) -> Vec<f64> {
        vec![self.d3() * u[0] * v[0] * w[0]]
    }

    fn mixed_param_jacobian_apply(&self, _q: &[f64], _p: &Parameters, j: usize, v: &[f64]) -> Vec<f64> {
        vec![match (self.kind, j) {
            (ScalarKind::Pitchfork, 0) => -v[0],
            (ScalarKind::Cusp, 1) => v[0],
            (ScalarKind::Fold, 0) | (ScalarKind::Cusp, 0) => 0.0,
            _ => panic!("parameter index {j} out of range"),
        }]
    }

    fn hessian_matrix(&self, q: &[f64], _p: &Parameters, u: &[f64]) -> SparseMatrix {
        scalar(self.d2(q[0]) * u[0])
    }

    fn third_matrix(&self, _q: &[f64], _p: &Parameters, u: &[f64], v: &[f64]) -> SparseMatrix {
        scalar(self.d3() * u[0] * v[0])
    }
}

/// `R = K q - s c` with `M = I` and the single parameter `s`.
#[derive(Debug, Clone)]
pub struct LinearProblem {
    k: SparseMatrix,
    c: Vec<f64>,
}

impl LinearProblem {
    pub fn new(k: SparseMatrix, c: Vec<f64>) -> Self {
        assert!(k.is_square() && k.nrows() == c.len());
        Self { k, c }
    }

    pub fn matrix(&self) -> &SparseMatrix {
        &self.k
    }
}

impl Problem for LinearProblem {
    fn name(&self) -> &str {
        "linear"
    }

    fn dim(&self) -> usize {
        self.c.len()
    }

    fn default_parameters(&self) -> Parameters {
        Parameters::new([("s", 1.0)], 0).unwrap()
    }

    fn polynomial_degree(&self) -> Option<u32> {
        Some(1)
    }

    fn residual(&self, q: &[f64], p: &Parameters) -> Vec<f64> {
        let s = p.value(0);
        self.k.matvec(q).iter().zip(&self.c).map(|(a, c)| a - s * c).collect()
    }

    fn jacobian(&self, _q: &[f64], _p: &Parameters) -> SparseMatrix {
        self.k.clone()
    }

    fn param_gradient(&self, _q: &[f64], _p: &Parameters, _j: usize) -> Vec<f64> {
        self.c.iter().map(|c| -c).collect()
    }

    fn hessian_apply(&self, _q: &[f64], _p: &Parameters, _u: &[f64], _v: &[f64]) -> Vec<f64> {
        vec![0.0; self.dim()]
    }

    fn third_apply(&self, _q: &[f64], _p: &Parameters, _u: &[f64], _v: &[f64], _w: &[f64]) -> Vec<f64> {
        vec![0.0; self.dim()]
    }

    fn mixed_param_jacobian_apply(&self, _q: &[f64], _p: &Parameters, _j: usize, _v: &[f64]) -> Vec<f64> {
        vec![0.0; self.dim()]
    }

    fn hessian_matrix(&self, _q: &[f64], _p: &Parameters, _u: &[f64]) -> SparseMatrix {
        SparseMatrix::zeros(self.dim(), self.dim())
    }

    fn third_matrix(&self, _q: &[f64], _p: &Parameters, _u: &[f64], _v: &[f64]) -> SparseMatrix {
        SparseMatrix::zeros(self.dim(), self.dim())
    }
}
