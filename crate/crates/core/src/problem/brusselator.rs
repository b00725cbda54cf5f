//! Brusselator reaction-diffusion system.
//!
//! `X' = A - (B+1) X + X^2 Y + D_X/L^2 X_xx`, `Y' = B X - X^2 Y + D_Y/L^2 Y_xx`
//! on `[0, 1]` with `(X, Y) = (A, B/A)` at both ends, second-order central
//! differences, and Dirichlet nodes eliminated. Unknowns are interleaved
//! `[X_1, Y_1, X_2, Y_2, ...]`. Since `M q' + R = 0` with `M = I`, the
//! residual is the negated right-hand side.

use super::{Parameters, Problem};
use crate::error::{Error, Result};
use crate::linalg::{SparseMatrix, TripletBuilder};

const A: usize = 0;
const B: usize = 1;
const DX: usize = 2;
const DY: usize = 3;
const L: usize = 4;

#[derive(Debug, Clone)]
pub struct Brusselator {
    name: String,
    /// Interior nodes; 1 with no diffusion for the 0-D system.
    nodes: usize,
    diffusion: bool,
    h: f64,
}

impl Brusselator {
    pub fn one_d(grid_points: usize) -> Result<Self> {
        if grid_points < 3 {
            return Err(Error::InvalidConfiguration(format!(
                "brusselator_1d needs at least 3 grid points, got {grid_points}"
            )));
        }
        Ok(Self {
            name: "brusselator_1d".into(),
            nodes: grid_points - 2,
            diffusion: true,
            h: 1.0 / (grid_points - 1) as f64,
        })
    }

    pub fn zero_d() -> Self {
        Self { name: "brusselator_0d".into(), nodes: 1, diffusion: false, h: 1.0 }
    }

    pub fn grid_spacing(&self) -> f64 {
        self.h
    }

    fn coeffs(&self, p: &Parameters) -> (f64, f64, f64, f64) {
        let a = p.value(A);
        let b = p.value(B);
        if !self.diffusion {
            return (a, b, 0.0, 0.0);
        }
        let l2h2 = p.value(L).powi(2) * self.h * self.h;
        (a, b, p.value(DX) / l2h2, p.value(DY) / l2h2)
    }

    /// Second difference of component `c` (0 = X, 1 = Y) with boundary value `bc`.
    fn lap(&self, v: &[f64], c: usize, i: usize, bc: f64) -> f64 {
        let left = if i == 0 { bc } else { v[2 * (i - 1) + c] };
        let right = if i + 1 == self.nodes { bc } else { v[2 * (i + 1) + c] };
        left - 2.0 * v[2 * i + c] + right
    }

    fn push_lap(&self, t: &mut TripletBuilder, row: usize, i: usize, c: usize, coeff: f64) {
        t.push(row, 2 * i + c, -2.0 * coeff);
        if i > 0 {
            t.push(row, 2 * (i - 1) + c, coeff);
        }
        if i + 1 < self.nodes {
            t.push(row, 2 * (i + 1) + c, coeff);
        }
    }

    /// Diffusion stencil of a single component with unit coefficient (zero boundary).
    fn lap_apply(&self, v: &[f64], c: usize) -> Vec<f64> {
        (0..self.nodes).map(|i| self.lap(v, c, i, 0.0)).collect()
    }
}

impl Problem for Brusselator {
    fn name(&self) -> &str {
        &self.name
    }

    fn dim(&self) -> usize {
        2 * self.nodes
    }

    fn default_parameters(&self) -> Parameters {
        if self.diffusion {
            Parameters::new([("A", 2.0), ("B", 5.45), ("D_X", 0.008), ("D_Y", 0.004), ("L", 0.5)], L).unwrap()
        } else {
            Parameters::new([("A", 2.0), ("B", 5.45)], B).unwrap()
        }
    }

    fn initial_guess(&self, p: &Parameters) -> Vec<f64> {
        let a = p.value(A);
        let b = p.value(B);
        (0..self.nodes).flat_map(|_| [a, b / a]).collect()
    }

    fn polynomial_degree(&self) -> Option<u32> {
        Some(3)
    }

    fn residual(&self, q: &[f64], p: &Parameters) -> Vec<f64> {
        let (a, b, cx, cy) = self.coeffs(p);
        let mut r = vec![0.0; self.dim()];
        for i in 0..self.nodes {
            let (x, y) = (q[2 * i], q[2 * i + 1]);
            let x2y = x * x * y;
            let mut fx = a - (b + 1.0) * x + x2y;
            let mut fy = b * x - x2y;
            if self.diffusion {
                fx += cx * self.lap(q, 0, i, a);
                fy += cy * self.lap(q, 1, i, b / a);
            }
            r[2 * i] = -fx;
            r[2 * i + 1] = -fy;
        }
        r
    }

    fn jacobian(&self, q: &[f64], p: &Parameters) -> SparseMatrix {
        let (_, b, cx, cy) = self.coeffs(p);
        let mut t = TripletBuilder::with_capacity(self.dim(), self.dim(), 8 * self.nodes);
        for i in 0..self.nodes {
            let (x, y) = (q[2 * i], q[2 * i + 1]);
            let (rx, ry) = (2 * i, 2 * i + 1);
            t.push(rx, rx, (b + 1.0) - 2.0 * x * y);
            t.push(rx, ry, -x * x);
            t.push(ry, rx, -(b - 2.0 * x * y));
            t.push(ry, ry, x * x);
            if self.diffusion {
                self.push_lap(&mut t, rx, i, 0, -cx);
                self.push_lap(&mut t, ry, i, 1, -cy);
            }
        }
        t.build()
    }

    fn param_gradient(&self, q: &[f64], p: &Parameters, j: usize) -> Vec<f64> {
        let (a, b, cx, cy) = self.coeffs(p);
        let n = self.nodes;
        let mut g = vec![0.0; self.dim()];
        let at_boundary = |i: usize| (i == 0) as u8 as f64 + (i + 1 == n) as u8 as f64;
        match j {
            A => {
                for i in 0..n {
                    g[2 * i] = -1.0;
                    if self.diffusion {
                        let k = at_boundary(i);
                        g[2 * i] -= cx * k;
                        g[2 * i + 1] -= cy * k * (-b / (a * a));
                    }
                }
            }
            B => {
                for i in 0..n {
                    g[2 * i] = q[2 * i];
                    g[2 * i + 1] = -q[2 * i];
                    if self.diffusion {
                        g[2 * i + 1] -= cy * at_boundary(i) / a;
                    }
                }
            }
            DX | DY | L if self.diffusion => {
                let l = p.value(L);
                let h2 = self.h * self.h;
                for i in 0..n {
                    let lx = self.lap(q, 0, i, a) / h2;
                    let ly = self.lap(q, 1, i, b / a) / h2;
                    match j {
                        DX => g[2 * i] = -lx / (l * l),
                        DY => g[2 * i + 1] = -ly / (l * l),
                        _ => {
                            g[2 * i] = 2.0 * p.value(DX) * lx / l.powi(3);
                            g[2 * i + 1] = 2.0 * p.value(DY) * ly / l.powi(3);
                        }
                    }
                }
            }
            _ => panic!("parameter index {j} out of range"),
        }
        g
    }

    fn hessian_apply(&self, q: &[f64], _p: &Parameters, u: &[f64], v: &[f64]) -> Vec<f64> {
        let mut r = vec![0.0; self.dim()];
        for i in 0..self.nodes {
            let (x, y) = (q[2 * i], q[2 * i + 1]);
            let (ux, uy, vx, vy) = (u[2 * i], u[2 * i + 1], v[2 * i], v[2 * i + 1]);
            let d = 2.0 * y * ux * vx + 2.0 * x * (ux * vy + uy * vx);
            r[2 * i] = -d;
            r[2 * i + 1] = d;
        }
        r
    }

    fn third_apply(&self, _q: &[f64], _p: &Parameters, u: &[f64], v: &[f64], w: &[f64]) -> Vec<f64> {
        let mut r = vec![0.0; self.dim()];
        for i in 0..self.nodes {
            let (ux, uy, vx, vy, wx, wy) = (u[2 * i], u[2 * i + 1], v[2 * i], v[2 * i + 1], w[2 * i], w[2 * i + 1]);
            let d = 2.0 * (ux * vx * wy + ux * vy * wx + uy * vx * wx);
            r[2 * i] = -d;
            r[2 * i + 1] = d;
        }
        r
    }

    fn mixed_param_jacobian_apply(&self, _q: &[f64], p: &Parameters, j: usize, v: &[f64]) -> Vec<f64> {
        let n = self.nodes;
        let mut r = vec![0.0; self.dim()];
        match j {
            A => {}
            B => {
                for i in 0..n {
                    r[2 * i] = v[2 * i];
                    r[2 * i + 1] = -v[2 * i];
                }
            }
            DX | DY | L if self.diffusion => {
                let l = p.value(L);
                let h2 = self.h * self.h;
                let lx = self.lap_apply(v, 0);
                let ly = self.lap_apply(v, 1);
                for i in 0..n {
                    match j {
                        DX => r[2 * i] = -lx[i] / (l * l * h2),
                        DY => r[2 * i + 1] = -ly[i] / (l * l * h2),
                        _ => {
                            r[2 * i] = 2.0 * p.value(DX) * lx[i] / (l.powi(3) * h2);
                            r[2 * i + 1] = 2.0 * p.value(DY) * ly[i] / (l.powi(3) * h2);
                        }
                    }
                }
            }
            _ => panic!("parameter index {j} out of range"),
        }
        r
    }

    fn hessian_matrix(&self, q: &[f64], _p: &Parameters, u: &[f64]) -> SparseMatrix {
        let mut t = TripletBuilder::with_capacity(self.dim(), self.dim(), 4 * self.nodes);
        for i in 0..self.nodes {
            let (x, y) = (q[2 * i], q[2 * i + 1]);
            let (ux, uy) = (u[2 * i], u[2 * i + 1]);
            let cx = 2.0 * y * ux + 2.0 * x * uy;
            let cy = 2.0 * x * ux;
            let (rx, ry) = (2 * i, 2 * i + 1);
            t.push(rx, rx, -cx);
            t.push(rx, ry, -cy);
            t.push(ry, rx, cx);
            t.push(ry, ry, cy);
        }
        t.build()
    }

    fn third_matrix(&self, _q: &[f64], _p: &Parameters, u: &[f64], v: &[f64]) -> SparseMatrix {
        let mut t = TripletBuilder::with_capacity(self.dim(), self.dim(), 4 * self.nodes);
        for i in 0..self.nodes {
            let (ux, uy, vx, vy) = (u[2 * i], u[2 * i + 1], v[2 * i], v[2 * i + 1]);
            let cx = 2.0 * (ux * vy + uy * vx);
            let cy = 2.0 * ux * vx;
            let (rx, ry) = (2 * i, 2 * i + 1);
            t.push(rx, rx, -cx);
            t.push(rx, ry, -cy);
            t.push(ry, rx, cx);
            t.push(ry, ry, cy);
        }
        t.build()
    }
}
