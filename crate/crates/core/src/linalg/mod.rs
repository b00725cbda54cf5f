//! Sparse direct solves and block Schur elimination of bordered systems.

mod lu;
mod sparse;

use nalgebra::DMatrix;
use num_complex::Complex64;

pub use lu::{factor, Factorization};
pub use sparse::{SparseMatrix, TripletBuilder};

use crate::error::{Error, Result};

/// Free-function form of [`Factorization::solve`].
pub fn solve(f: &Factorization, b: &[f64], transpose: bool) -> Result<Vec<f64>> {
    f.solve(b, transpose)
}

/// `[core, C; R^T, D]` with `k` dense border columns `C`, rows `R` and a `k x k` corner.
#[derive(Debug, Clone)]
pub struct BorderedSystem {
    pub core: SparseMatrix,
    pub border_cols: Vec<Vec<f64>>,
    pub border_rows: Vec<Vec<f64>>,
    pub corner: DMatrix<f64>,
}

#[derive(Debug, Clone)]
pub struct BorderedSolution {
    pub top: Vec<f64>,
    pub bottom: Vec<f64>,
    /// `core^{-1} border_cols[j]` for each border column.
    pub core_solves: Vec<Vec<f64>>,
}

const SCHUR_RTOL: f64 = 1e-14;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl BorderedSystem {
    pub fn new(
        core: SparseMatrix,
        border_cols: Vec<Vec<f64>>,
        border_rows: Vec<Vec<f64>>,
        corner: DMatrix<f64>,
    ) -> Result<Self> {
        let n = core.nrows();
        core.check_square()?;
        let k = border_cols.len();
        if k == 0 || border_rows.len() != k || corner.shape() != (k, k) {
            return Err(Error::InvalidConfiguration(format!(
                "bordered system needs k >= 1 matching borders and a k x k corner (k = {k})"
            )));
        }
        for v in border_cols.iter().chain(&border_rows) {
            if v.len() != n {
                return Err(Error::DimensionMismatch { expected: n, found: v.len() });
            }
        }
        Ok(Self { core, border_cols, border_rows, corner })
    }

    pub fn dim(&self) -> usize {
        self.core.nrows()
    }

    pub fn border_size(&self) -> usize {
        self.border_cols.len()
    }

    /// Monolithic `(n + k)` square matrix.
    pub fn assemble(&self) -> SparseMatrix {
        let n = self.dim();
        let k = self.border_size();
        let mut b = TripletBuilder::with_capacity(n + k, n + k, self.core.nnz() + 2 * n * k + k * k);
        b.add_block(0, 0, &self.core, 1.0);
        for j in 0..k {
            for i in 0..n {
                if self.border_cols[j][i] != 0.0 {
                    b.push(i, n + j, self.border_cols[j][i]);
                }
                if self.border_rows[j][i] != 0.0 {
                    b.push(n + j, i, self.border_rows[j][i]);
                }
            }
            for l in 0..k {
                b.push(n + j, n + l, self.corner[(j, l)]);
            }
        }
        b.build()
    }
}

/// Exact block elimination using only solves with the core factorization.
pub fn solve_bordered(
    sys: &BorderedSystem,
    rhs_top: &[f64],
    rhs_bottom: &[f64],
    core: &Factorization,
) -> Result<BorderedSolution> {
    let n = sys.dim();
    let k = sys.border_size();
    if rhs_top.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: rhs_top.len() });
    }
    if rhs_bottom.len() != k {
        return Err(Error::DimensionMismatch { expected: k, found: rhs_bottom.len() });
    }
    if core.dim() != n {
        return Err(Error::DimensionMismatch { expected: n, found: core.dim() });
    }
    let core_solves: Vec<Vec<f64>> = sys
        .border_cols
        .iter()
        .map(|c| core.solve(c, false))
        .collect::<Result<_>>()?;
    let z = core.solve(rhs_top, false)?;

    let mut schur = sys.corner.clone();
    let mut scale = sys.corner.amax();
    for i in 0..k {
        for j in 0..k {
            let t = dot(&sys.border_rows[i], &core_solves[j]);
            scale = scale.max(t.abs());
            schur[(i, j)] -= t;
        }
    }
    let g: Vec<f64> = (0..k).map(|i| rhs_bottom[i] - dot(&sys.border_rows[i], &z)).collect();
    let y = small_solve(&schur, &g, scale)?;
    let mut top = z;
    for j in 0..k {
        for i in 0..n {
            top[i] -= core_solves[j][i] * y[j];
        }
    }
    Ok(BorderedSolution { top, bottom: y, core_solves })
}

/// Schur route, falling back to a monolithic factorization only when the
/// core itself (not the bordered operator) is numerically singular.
pub fn solve_bordered_robust(
    sys: &BorderedSystem,
    rhs_top: &[f64],
    rhs_bottom: &[f64],
) -> Result<BorderedSolution> {
    BorderedSolver::new(sys)?.solve(rhs_top, rhs_bottom)
}

enum Route {
    Schur { core: Factorization, core_solves: Vec<Vec<f64>>, schur: DMatrix<f64>, scale: f64 },
    Monolithic(Factorization),
}

/// Factored bordered operator for repeated right-hand sides.
pub struct BorderedSolver {
    n: usize,
    border_rows: Vec<Vec<f64>>,
    route: Route,
}

impl BorderedSolver {
    pub fn new(sys: &BorderedSystem) -> Result<Self> {
        let n = sys.dim();
        let k = sys.border_size();
        let route = match factor(&sys.core) {
            Ok(core) => {
                let core_solves: Vec<Vec<f64>> =
                    sys.border_cols.iter().map(|c| core.solve(c, false)).collect::<Result<_>>()?;
                let mut schur = sys.corner.clone();
                let mut scale = sys.corner.amax();
                for i in 0..k {
                    for j in 0..k {
                        let t = dot(&sys.border_rows[i], &core_solves[j]);
                        scale = scale.max(t.abs());
                        schur[(i, j)] -= t;
                    }
                }
                match small_solve(&schur, &vec![0.0; k], scale) {
                    Ok(_) => Route::Schur { core, core_solves, schur, scale },
                    Err(_) => Route::Monolithic(monolithic_factor(sys)?),
                }
            }
            Err(Error::SingularMatrix { .. }) => Route::Monolithic(monolithic_factor(sys)?),
            Err(e) => return Err(e),
        };
        Ok(Self { n, border_rows: sys.border_rows.clone(), route })
    }

    /// True when solves go through the core factorization.
    pub fn uses_schur(&self) -> bool {
        matches!(self.route, Route::Schur { .. })
    }

    /// `core^{-1} border_cols`, empty on the monolithic route.
    pub fn core_solves(&self) -> &[Vec<f64>] {
        match &self.route {
            Route::Schur { core_solves, .. } => core_solves,
            Route::Monolithic(_) => &[],
        }
    }

    pub fn solve(&self, rhs_top: &[f64], rhs_bottom: &[f64]) -> Result<BorderedSolution> {
        let (n, k) = (self.n, self.border_rows.len());
        if rhs_top.len() != n {
            return Err(Error::DimensionMismatch { expected: n, found: rhs_top.len() });
        }
        if rhs_bottom.len() != k {
            return Err(Error::DimensionMismatch { expected: k, found: rhs_bottom.len() });
        }
        match &self.route {
            Route::Schur { core, core_solves, schur, scale } => {
                let z = core.solve(rhs_top, false)?;
                let g: Vec<f64> = (0..k).map(|i| rhs_bottom[i] - dot(&self.border_rows[i], &z)).collect();
                let y = small_solve(schur, &g, *scale)?;
                let mut top = z;
                for j in 0..k {
                    for i in 0..n {
                        top[i] -= core_solves[j][i] * y[j];
                    }
                }
                Ok(BorderedSolution { top, bottom: y, core_solves: core_solves.clone() })
            }
            Route::Monolithic(f) => {
                let mut rhs = rhs_top.to_vec();
                rhs.extend_from_slice(rhs_bottom);
                let x = f.solve(&rhs, false)?;
                Ok(BorderedSolution { top: x[..n].to_vec(), bottom: x[n..].to_vec(), core_solves: vec![] })
            }
        }
    }
}

fn monolithic_factor(sys: &BorderedSystem) -> Result<Factorization> {
    factor(&sys.assemble()).map_err(|e| match e {
        Error::SingularMatrix { .. } => Error::BorderedSingular,
        e => e,
    })
}

fn small_solve(m: &DMatrix<f64>, b: &[f64], scale: f64) -> Result<Vec<f64>> {
    let k = m.nrows();
    let lu = m.clone().full_piv_lu();
    let u = lu.u();
    let min_piv = (0..k).map(|i| u[(i, i)].abs()).fold(f64::INFINITY, f64::min);
    if !(min_piv > SCHUR_RTOL * scale) {
        return Err(Error::BorderedSingular);
    }
    let x = lu
        .solve(&nalgebra::DVector::from_row_slice(b))
        .ok_or(Error::BorderedSingular)?;
    Ok(x.iter().copied().collect())
}

/// Interleaves complex vectors as `[re0, im0, re1, im1, ...]`.
pub fn pack_complex(v: &[Complex64]) -> Vec<f64> {
    v.iter().flat_map(|z| [z.re, z.im]).collect()
}

pub fn unpack_complex(v: &[f64]) -> Vec<Complex64> {
    v.chunks_exact(2).map(|c| Complex64::new(c[0], c[1])).collect()
}

/// Real `2n x 2n` image of `re + i im` in the interleaved layout.
pub fn complex_to_real(re: &SparseMatrix, im: Option<&SparseMatrix>) -> SparseMatrix {
    let n = re.nrows();
    let m = re.ncols();
    let cap = 2 * re.nnz() + 2 * im.map_or(0, |x| x.nnz());
    let mut b = TripletBuilder::with_capacity(2 * n, 2 * m, cap);
    for (i, j, v) in re.iter() {
        b.push(2 * i, 2 * j, v);
        b.push(2 * i + 1, 2 * j + 1, v);
    }
    if let Some(im) = im {
        for (i, j, v) in im.iter() {
            b.push(2 * i, 2 * j + 1, -v);
            b.push(2 * i + 1, 2 * j, v);
        }
    }
    b.build()
}

/// Complex sparse matrix stored as real and (optional) imaginary parts.
#[derive(Debug, Clone)]
pub struct ComplexSparse {
    pub re: SparseMatrix,
    pub im: Option<SparseMatrix>,
}

impl ComplexSparse {
    pub fn real(re: SparseMatrix) -> Self {
        Self { re, im: None }
    }

    pub fn dim(&self) -> usize {
        self.re.nrows()
    }

    pub fn matvec(&self, x: &[Complex64]) -> Vec<Complex64> {
        let xr: Vec<f64> = x.iter().map(|z| z.re).collect();
        let xi: Vec<f64> = x.iter().map(|z| z.im).collect();
        let mut yr = self.re.matvec(&xr);
        let mut yi = self.re.matvec(&xi);
        if let Some(im) = &self.im {
            let a = im.matvec(&xi);
            let b = im.matvec(&xr);
            yr.iter_mut().zip(&a).for_each(|(y, v)| *y -= v);
            yi.iter_mut().zip(&b).for_each(|(y, v)| *y += v);
        }
        yr.into_iter().zip(yi).map(|(r, i)| Complex64::new(r, i)).collect()
    }

    /// `A^H x`.
    pub fn adjoint_matvec(&self, x: &[Complex64]) -> Vec<Complex64> {
        let xr: Vec<f64> = x.iter().map(|z| z.re).collect();
        let xi: Vec<f64> = x.iter().map(|z| z.im).collect();
        let mut yr = self.re.transpose_matvec(&xr);
        let mut yi = self.re.transpose_matvec(&xi);
        if let Some(im) = &self.im {
            let a = im.transpose_matvec(&xi);
            let b = im.transpose_matvec(&xr);
            yr.iter_mut().zip(&a).for_each(|(y, v)| *y += v);
            yi.iter_mut().zip(&b).for_each(|(y, v)| *y -= v);
        }
        yr.into_iter().zip(yi).map(|(r, i)| Complex64::new(r, i)).collect()
    }

    pub fn to_dense(&self) -> DMatrix<Complex64> {
        let re = self.re.to_dense();
        match &self.im {
            Some(im) => {
                let im = im.to_dense();
                DMatrix::from_fn(re.nrows(), re.ncols(), |i, j| Complex64::new(re[(i, j)], im[(i, j)]))
            }
            None => re.map(|v| Complex64::new(v, 0.0)),
        }
    }

    /// `self + s * other`.
    pub fn add_scaled(&self, other: &ComplexSparse, s: Complex64) -> ComplexSparse {
        let mut re = self.re.add_scaled(&other.re, s.re);
        let mut im = match &self.im {
            Some(m) => m.add_scaled(&other.re, s.im),
            None => other.re.scaled(s.im),
        };
        if let Some(oi) = &other.im {
            re = re.add_scaled(oi, -s.im);
            im = im.add_scaled(oi, s.re);
        }
        let im = if im.iter().all(|(_, _, v)| v == 0.0) { None } else { Some(im) };
        ComplexSparse { re, im }
    }

    pub fn to_real(&self) -> SparseMatrix {
        complex_to_real(&self.re, self.im.as_ref())
    }
}

/// Factorization of a complex operator through its real interleaved image.
#[derive(Debug, Clone)]
pub struct ComplexFactorization {
    inner: Factorization,
}

impl ComplexFactorization {
    pub fn new(a: &ComplexSparse) -> Result<Self> {
        Ok(Self { inner: factor(&a.to_real())? })
    }

    pub fn dim(&self) -> usize {
        self.inner.dim() / 2
    }

    /// Solves `A x = b`, or `A^H x = b` when `adjoint` is set.
    pub fn solve(&self, b: &[Complex64], adjoint: bool) -> Result<Vec<Complex64>> {
        Ok(unpack_complex(&self.inner.solve(&pack_complex(b), adjoint)?))
    }
}
