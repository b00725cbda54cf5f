//! System interface `M(q; alpha) q' + R(q; alpha) = 0` and built-in test systems.

mod brusselator;
mod check;
mod scalar;

use num_complex::Complex64;

pub use brusselator::Brusselator;
pub use check::{check_derivatives, DerivativeReport};
pub use scalar::{LinearProblem, ScalarPoly};

use crate::error::{Error, Result};
use crate::linalg::{ComplexSparse, SparseMatrix};

/// Named real parameters with one marked as the continuation parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameters {
    names: Vec<String>,
    values: Vec<f64>,
    active: usize,
}

impl Parameters {
    pub fn new<S: Into<String>>(pairs: impl IntoIterator<Item = (S, f64)>, active: usize) -> Result<Self> {
        let (names, values): (Vec<String>, Vec<f64>) = pairs.into_iter().map(|(n, v)| (n.into(), v)).unzip();
        for (i, n) in names.iter().enumerate() {
            if names[..i].contains(n) {
                return Err(Error::InvalidConfiguration(format!("duplicate parameter name {n}")));
            }
        }
        if active >= names.len() {
            return Err(Error::InvalidConfiguration(format!(
                "active parameter index {active} out of range for {} parameters",
                names.len()
            )));
        }
        Ok(Self { names, values, active })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, i: usize) -> f64 {
        self.values[i]
    }

    pub fn set_value(&mut self, i: usize, v: f64) {
        self.values[i] = v;
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::InvalidConfiguration(format!("unknown parameter {name}")))
    }

    pub fn get(&self, name: &str) -> Result<f64> {
        Ok(self.values[self.index_of(name)?])
    }

    pub fn set(&mut self, name: &str, v: f64) -> Result<()> {
        let i = self.index_of(name)?;
        self.values[i] = v;
        Ok(())
    }

    pub fn active_index(&self) -> usize {
        self.active
    }

    pub fn active_name(&self) -> &str {
        &self.names[self.active]
    }

    pub fn active_value(&self) -> f64 {
        self.values[self.active]
    }

    pub fn set_active_value(&mut self, v: f64) {
        self.values[self.active] = v;
    }

    pub fn set_active(&mut self, name: &str) -> Result<()> {
        self.active = self.index_of(name)?;
        Ok(())
    }

    pub fn with_active(mut self, name: &str) -> Result<Self> {
        self.set_active(name)?;
        Ok(self)
    }

    pub fn with_value(mut self, name: &str, v: f64) -> Result<Self> {
        self.set(name, v)?;
        Ok(self)
    }
}

/// Residual, mass action and derivative callbacks of a discrete system.
///
/// All callbacks must be pure. The multilinear forms are symmetric in their
/// state arguments. `hessian_matrix(u)` is the sparse matrix of `v -> d2R(u, v)`
/// and `third_matrix(u, v)` that of `w -> d3R(u, v, w)`; both are needed for
/// assembling augmented and harmonic-balance Jacobians.
pub trait Problem: Send + Sync {
    fn name(&self) -> &str;
    fn dim(&self) -> usize;
    fn default_parameters(&self) -> Parameters;

    /// A reasonable starting state (e.g. a known equilibrium).
    fn initial_guess(&self, p: &Parameters) -> Vec<f64> {
        let _ = p;
        vec![0.0; self.dim()]
    }

    /// Polynomial degree of `R` in `q` when known; harmonic balance requires `<= 3`.
    fn polynomial_degree(&self) -> Option<u32> {
        None
    }

    /// True when `M` does not depend on `q`.
    fn mass_is_state_independent(&self) -> bool {
        true
    }

    fn residual(&self, q: &[f64], p: &Parameters) -> Vec<f64>;
    fn jacobian(&self, q: &[f64], p: &Parameters) -> SparseMatrix;
    fn param_gradient(&self, q: &[f64], p: &Parameters, j: usize) -> Vec<f64>;
    fn hessian_apply(&self, q: &[f64], p: &Parameters, u: &[f64], v: &[f64]) -> Vec<f64>;
    fn third_apply(&self, q: &[f64], p: &Parameters, u: &[f64], v: &[f64], w: &[f64]) -> Vec<f64>;
    fn mixed_param_jacobian_apply(&self, q: &[f64], p: &Parameters, j: usize, v: &[f64]) -> Vec<f64>;
    fn hessian_matrix(&self, q: &[f64], p: &Parameters, u: &[f64]) -> SparseMatrix;
    fn third_matrix(&self, q: &[f64], p: &Parameters, u: &[f64], v: &[f64]) -> SparseMatrix;

    fn mass_apply(&self, q: &[f64], p: &Parameters, v: &[f64]) -> Vec<f64> {
        let _ = (q, p);
        v.to_vec()
    }

    fn mass_matrix(&self, q: &[f64], p: &Parameters) -> SparseMatrix {
        let _ = (q, p);
        SparseMatrix::identity(self.dim())
    }

    /// `dM(u) v`.
    fn mass_jacobian_apply(&self, q: &[f64], p: &Parameters, u: &[f64], v: &[f64]) -> Vec<f64> {
        let _ = (q, p, u);
        vec![0.0; v.len()]
    }

    /// `d2M(u, v) w`.
    fn mass_second_apply(&self, q: &[f64], p: &Parameters, u: &[f64], v: &[f64], w: &[f64]) -> Vec<f64> {
        let _ = (q, p, u, v);
        vec![0.0; w.len()]
    }

    /// `d_{alpha_j} M v`.
    fn mass_param_gradient_apply(&self, q: &[f64], p: &Parameters, j: usize, v: &[f64]) -> Vec<f64> {
        let _ = (q, p, j);
        vec![0.0; v.len()]
    }
}

/// Built-in problem names accepted by [`builtin`].
pub const BUILTIN_NAMES: &[&str] =
    &["brusselator_1d", "brusselator_0d", "scalar_fold", "scalar_pitchfork", "scalar_cusp"];

/// Looks up a built-in problem; `grid_points` applies to `brusselator_1d`.
pub fn builtin(name: &str, grid_points: Option<usize>) -> Result<Box<dyn Problem>> {
    Ok(match name {
        "brusselator_1d" => Box::new(brusselator_1d(grid_points.unwrap_or(201))?),
        "brusselator_0d" => Box::new(brusselator_0d()),
        "scalar_fold" => Box::new(scalar_fold()),
        "scalar_pitchfork" => Box::new(scalar_pitchfork()),
        "scalar_cusp" => Box::new(scalar_cusp()),
        other => {
            return Err(Error::InvalidConfiguration(format!(
                "unknown problem {other}; expected one of {}",
                BUILTIN_NAMES.join(", ")
            )))
        }
    })
}

pub fn brusselator_1d(grid_points: usize) -> Result<Brusselator> {
    Brusselator::one_d(grid_points)
}

pub fn brusselator_0d() -> Brusselator {
    Brusselator::zero_d()
}

pub fn scalar_fold() -> ScalarPoly {
    ScalarPoly::fold()
}

pub fn scalar_pitchfork() -> ScalarPoly {
    ScalarPoly::pitchfork()
}

pub fn scalar_cusp() -> ScalarPoly {
    ScalarPoly::cusp()
}

// Complex extensions by (bi/tri)linearity over real and imaginary parts.

pub(crate) fn re(v: &[Complex64]) -> Vec<f64> {
    v.iter().map(|z| z.re).collect()
}

pub(crate) fn im(v: &[Complex64]) -> Vec<f64> {
    v.iter().map(|z| z.im).collect()
}

pub(crate) fn is_real(v: &[Complex64]) -> bool {
    v.iter().all(|z| z.im == 0.0)
}

pub(crate) fn to_complex(re: &[f64], im: Option<&[f64]>) -> Vec<Complex64> {
    match im {
        Some(im) => re.iter().zip(im).map(|(&a, &b)| Complex64::new(a, b)).collect(),
        None => re.iter().map(|&a| Complex64::new(a, 0.0)).collect(),
    }
}

fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    y.iter_mut().zip(x).for_each(|(y, x)| *y += a * x);
}

/// Expands a real multilinear map over complex arguments.
fn multilinear_c(args: &[&[Complex64]], f: &dyn Fn(&[Vec<f64>]) -> Vec<f64>, n: usize) -> Vec<Complex64> {
    let parts: Vec<(Vec<f64>, Vec<f64>, bool)> =
        args.iter().map(|a| (re(a), im(a), !is_real(a))).collect();
    let mut out_re = vec![0.0; n];
    let mut out_im = vec![0.0; n];
    let k = args.len();
    for mask in 0..(1usize << k) {
        // bit set -> take imaginary part of that argument
        if (0..k).any(|i| mask & (1 << i) != 0 && !parts[i].2) {
            continue;
        }
        let chosen: Vec<Vec<f64>> = (0..k)
            .map(|i| if mask & (1 << i) != 0 { parts[i].1.clone() } else { parts[i].0.clone() })
            .collect();
        let val = f(&chosen);
        // i^m
        match mask.count_ones() % 4 {
            0 => axpy(&mut out_re, 1.0, &val),
            1 => axpy(&mut out_im, 1.0, &val),
            2 => axpy(&mut out_re, -1.0, &val),
            _ => axpy(&mut out_im, -1.0, &val),
        }
    }
    to_complex(&out_re, Some(&out_im))
}

pub fn hessian_apply_c(
    pb: &dyn Problem,
    q: &[f64],
    p: &Parameters,
    u: &[Complex64],
    v: &[Complex64],
) -> Vec<Complex64> {
    multilinear_c(&[u, v], &|a| pb.hessian_apply(q, p, &a[0], &a[1]), pb.dim())
}

pub fn third_apply_c(
    pb: &dyn Problem,
    q: &[f64],
    p: &Parameters,
    u: &[Complex64],
    v: &[Complex64],
    w: &[Complex64],
) -> Vec<Complex64> {
    multilinear_c(&[u, v, w], &|a| pb.third_apply(q, p, &a[0], &a[1], &a[2]), pb.dim())
}

pub fn mass_apply_c(pb: &dyn Problem, q: &[f64], p: &Parameters, v: &[Complex64]) -> Vec<Complex64> {
    multilinear_c(&[v], &|a| pb.mass_apply(q, p, &a[0]), pb.dim())
}

pub fn mass_jacobian_apply_c(
    pb: &dyn Problem,
    q: &[f64],
    p: &Parameters,
    u: &[Complex64],
    v: &[Complex64],
) -> Vec<Complex64> {
    multilinear_c(&[u, v], &|a| pb.mass_jacobian_apply(q, p, &a[0], &a[1]), pb.dim())
}

pub fn mass_second_apply_c(
    pb: &dyn Problem,
    q: &[f64],
    p: &Parameters,
    u: &[Complex64],
    v: &[Complex64],
    w: &[Complex64],
) -> Vec<Complex64> {
    multilinear_c(&[u, v, w], &|a| pb.mass_second_apply(q, p, &a[0], &a[1], &a[2]), pb.dim())
}

pub fn mixed_param_jacobian_apply_c(
    pb: &dyn Problem,
    q: &[f64],
    p: &Parameters,
    j: usize,
    v: &[Complex64],
) -> Vec<Complex64> {
    multilinear_c(&[v], &|a| pb.mixed_param_jacobian_apply(q, p, j, &a[0]), pb.dim())
}

pub fn mass_param_gradient_apply_c(
    pb: &dyn Problem,
    q: &[f64],
    p: &Parameters,
    j: usize,
    v: &[Complex64],
) -> Vec<Complex64> {
    multilinear_c(&[v], &|a| pb.mass_param_gradient_apply(q, p, j, &a[0]), pb.dim())
}

pub fn jacobian_apply_c(pb: &dyn Problem, q: &[f64], p: &Parameters, v: &[Complex64]) -> Vec<Complex64> {
    ComplexSparse::real(pb.jacobian(q, p)).matvec(v)
}

/// Matrix of `v -> d2R(u, v)` for complex `u`.
pub fn hessian_matrix_c(pb: &dyn Problem, q: &[f64], p: &Parameters, u: &[Complex64]) -> ComplexSparse {
    let re_m = pb.hessian_matrix(q, p, &re(u));
    let im_m = if is_real(u) { None } else { Some(pb.hessian_matrix(q, p, &im(u))) };
    ComplexSparse { re: re_m, im: im_m }
}

/// Matrix of `w -> d3R(u, v, w)` for complex `u`, `v`.
pub fn third_matrix_c(
    pb: &dyn Problem,
    q: &[f64],
    p: &Parameters,
    u: &[Complex64],
    v: &[Complex64],
) -> ComplexSparse {
    let (ur, ui, vr, vi) = (re(u), im(u), re(v), im(v));
    let ureal = is_real(u);
    let vreal = is_real(v);
    let mut r = pb.third_matrix(q, p, &ur, &vr);
    if !ureal && !vreal {
        r = r.add_scaled(&pb.third_matrix(q, p, &ui, &vi), -1.0);
    }
    let im_part = match (ureal, vreal) {
        (true, true) => None,
        (false, true) => Some(pb.third_matrix(q, p, &ui, &vr)),
        (true, false) => Some(pb.third_matrix(q, p, &ur, &vi)),
        (false, false) => Some(pb.third_matrix(q, p, &ur, &vi).add_scaled(&pb.third_matrix(q, p, &ui, &vr), 1.0)),
    };
    ComplexSparse { re: r, im: im_part }
}

/// Euclidean norm.
pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Euclidean norm of a complex vector.
pub fn cnorm(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Hermitian inner product `a^H b`.
pub fn cdot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parameters_validate() {
        assert!(Parameters::new([("a", 1.0), ("a", 2.0)], 0).is_err());
        assert!(Parameters::new([("a", 1.0)], 1).is_err());
        let mut p = Parameters::new([("a", 1.0), ("b", 2.0)], 1).unwrap();
        assert_eq!(p.active_name(), "b");
        p.set("a", 3.0).unwrap();
        assert_eq!(p.values(), &[3.0, 2.0]);
        assert!(p.get("c").is_err());
    }

    #[test]
    fn registry_names() {
        for n in BUILTIN_NAMES {
            let p = builtin(n, Some(11)).unwrap();
            assert_eq!(p.name(), *n);
        }
        assert!(builtin("nope", None).is_err());
    }

    #[test]
    fn complex_hessian_is_bilinear() {
        let pb = brusselator_0d();
        let p = pb.default_parameters();
        let q = [1.3, 2.1];
        let u = [Complex64::new(0.3, -1.0), Complex64::new(0.5, 0.2)];
        let v = [Complex64::new(-0.7, 0.4), Complex64::new(1.1, -0.6)];
        let h = hessian_apply_c(&pb, &q, &p, &u, &v);
        // Direct complex evaluation of d2(X^2 Y)(u, v) = 2Y uX vX + 2X (uX vY + uY vX).
        let d = 2.0 * q[1] * u[0] * v[0] + 2.0 * q[0] * (u[0] * v[1] + u[1] * v[0]);
        assert!((h[0] + d).norm() < 1e-14);
        assert!((h[1] - d).norm() < 1e-14);
        let hm = hessian_matrix_c(&pb, &q, &p, &u).matvec(&v);
        assert!((hm[0] - h[0]).norm() < 1e-14 && (hm[1] - h[1]).norm() < 1e-14);
    }
}
