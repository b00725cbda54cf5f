use super::{norm, Parameters, Problem};
use crate::error::{Error, Result};

/// Maximum relative error of each callback against central differences of
/// the next-lower-order callback.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivativeReport {
    pub jacobian: f64,
    pub param_gradient: Vec<f64>,
    pub hessian: f64,
    pub third: f64,
    pub mixed_param_jacobian: Vec<f64>,
    pub mass_jacobian: f64,
    pub mass_second: f64,
    pub mass_param_gradient: Vec<f64>,
    /// `hessian_matrix`/`third_matrix` against the apply forms.
    pub matrix_forms: f64,
    /// `|H(u,v) - H(v,u)|` and permutation asymmetry of the third derivative.
    pub symmetry: f64,
}

impl DerivativeReport {
    pub fn max_error(&self) -> f64 {
        [self.jacobian, self.hessian, self.third, self.mass_jacobian, self.mass_second, self.matrix_forms, self.symmetry]
            .into_iter()
            .chain(self.param_gradient.iter().copied())
            .chain(self.mixed_param_jacobian.iter().copied())
            .chain(self.mass_param_gradient.iter().copied())
            .fold(0.0, f64::max)
    }

    pub fn entries(&self) -> Vec<(String, f64)> {
        let mut out = vec![
            ("jacobian".to_string(), self.jacobian),
            ("hessian".to_string(), self.hessian),
            ("third".to_string(), self.third),
            ("mass_jacobian".to_string(), self.mass_jacobian),
            ("mass_second".to_string(), self.mass_second),
            ("matrix_forms".to_string(), self.matrix_forms),
            ("symmetry".to_string(), self.symmetry),
        ];
        for (j, e) in self.param_gradient.iter().enumerate() {
            out.push((format!("param_gradient[{j}]"), *e));
        }
        for (j, e) in self.mixed_param_jacobian.iter().enumerate() {
            out.push((format!("mixed_param_jacobian[{j}]"), *e));
        }
        for (j, e) in self.mass_param_gradient.iter().enumerate() {
            out.push((format!("mass_param_gradient[{j}]"), *e));
        }
        out
    }
}

/// Deterministic, non-degenerate probe direction.
fn probe(n: usize, seed: f64) -> Vec<f64> {
    (0..n).map(|i| ((i as f64 + 1.0) * seed).sin() + 0.3 * ((i as f64) * 0.37 * seed).cos()).collect()
}

fn shifted(q: &[f64], d: &[f64], h: f64) -> Vec<f64> {
    q.iter().zip(d).map(|(a, b)| a + h * b).collect()
}

fn rel_err(fd: &[f64], exact: &[f64]) -> f64 {
    let diff: Vec<f64> = fd.iter().zip(exact).map(|(a, b)| a - b).collect();
    let scale = norm(exact).max(norm(fd));
    if scale < 1e-300 {
        0.0
    } else {
        norm(&diff) / scale
    }
}

fn central(f: impl Fn(f64) -> Vec<f64>, h: f64) -> Vec<f64> {
    let p = f(h);
    let m = f(-h);
    p.iter().zip(&m).map(|(a, b)| (a - b) / (2.0 * h)).collect()
}

fn sym_err(a: &[f64], b: &[f64]) -> f64 {
    rel_err(a, b)
}

/// Checks every derivative callback at `(q, p)`.
pub fn check_derivatives(pb: &dyn Problem, q: &[f64], p: &Parameters) -> Result<DerivativeReport> {
    let n = pb.dim();
    if q.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: q.len() });
    }
    let r0 = pb.residual(q, p);
    if r0.iter().any(|v| !v.is_finite()) {
        return Err(Error::EvaluationFailure("non-finite residual".into()));
    }
    let h = f64::EPSILON.cbrt() * norm(q).max(1.0);
    let (u, v, w) = (probe(n, 1.3), probe(n, 2.7), probe(n, 0.61));

    let jv = pb.jacobian(q, p).matvec(&v);
    let jacobian = rel_err(&central(|s| pb.residual(&shifted(q, &v, s), p), h), &jv);

    let hess = pb.hessian_apply(q, p, &u, &v);
    let hessian = rel_err(&central(|s| pb.jacobian(&shifted(q, &u, s), p).matvec(&v), h), &hess);

    let t = pb.third_apply(q, p, &u, &v, &w);
    let third = rel_err(&central(|s| pb.hessian_apply(&shifted(q, &u, s), p, &v, &w), h), &t);

    let mass_j = pb.mass_jacobian_apply(q, p, &u, &v);
    let mass_jacobian = rel_err(&central(|s| pb.mass_apply(&shifted(q, &u, s), p, &v), h), &mass_j);

    let mass_s = pb.mass_second_apply(q, p, &u, &v, &w);
    let mass_second =
        rel_err(&central(|s| pb.mass_jacobian_apply(&shifted(q, &u, s), p, &v, &w), h), &mass_s);

    let mut param_gradient = Vec::new();
    let mut mixed_param_jacobian = Vec::new();
    let mut mass_param_gradient = Vec::new();
    for j in 0..p.len() {
        let hp = f64::EPSILON.cbrt() * p.value(j).abs().max(1.0);
        let perturbed = |s: f64| {
            let mut pp = p.clone();
            pp.set_value(j, p.value(j) + s);
            pp
        };
        param_gradient.push(rel_err(
            &central(|s| pb.residual(q, &perturbed(s)), hp),
            &pb.param_gradient(q, p, j),
        ));
        mixed_param_jacobian.push(rel_err(
            &central(|s| pb.jacobian(q, &perturbed(s)).matvec(&v), hp),
            &pb.mixed_param_jacobian_apply(q, p, j, &v),
        ));
        mass_param_gradient.push(rel_err(
            &central(|s| pb.mass_apply(q, &perturbed(s), &v), hp),
            &pb.mass_param_gradient_apply(q, p, j, &v),
        ));
    }

    let matrix_forms = rel_err(&pb.hessian_matrix(q, p, &u).matvec(&v), &hess)
        .max(rel_err(&pb.third_matrix(q, p, &u, &v).matvec(&w), &t))
        .max(rel_err(&pb.mass_matrix(q, p).matvec(&v), &pb.mass_apply(q, p, &v)));

    let symmetry = sym_err(&pb.hessian_apply(q, p, &v, &u), &hess)
        .max(sym_err(&pb.third_apply(q, p, &w, &u, &v), &t))
        .max(sym_err(&pb.third_apply(q, p, &v, &w, &u), &t))
        .max(sym_err(&pb.third_apply(q, p, &u, &w, &v), &t));

    Ok(DerivativeReport {
        jacobian,
        param_gradient,
        hessian,
        third,
        mixed_param_jacobian,
        mass_jacobian,
        mass_second,
        mass_param_gradient,
        matrix_forms,
        symmetry,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::SparseMatrix;
    use crate::problem::{brusselator_1d, scalar_cusp, Brusselator};

    #[test]
    fn brusselator_base_state_consistent() {
        let pb = brusselator_1d(41).unwrap();
        let p = pb.default_parameters();
        let rep = check_derivatives(&pb, &pb.initial_guess(&p), &p).unwrap();
        assert!(rep.max_error() < 1e-6, "{rep:?}");
    }

    #[test]
    fn cusp_third_derivative_exact() {
        let pb = scalar_cusp();
        let p = pb.default_parameters();
        let rep = check_derivatives(&pb, &[0.3], &p).unwrap();
        assert!(rep.third < 1e-12, "{}", rep.third);
    }

    /// Brusselator with the jacobian's sign flipped.
    struct WrongJacobian(Brusselator);

    impl Problem for WrongJacobian {
        fn name(&self) -> &str {
            "wrong"
        }
        fn dim(&self) -> usize {
            self.0.dim()
        }
        fn default_parameters(&self) -> Parameters {
            self.0.default_parameters()
        }
        fn residual(&self, q: &[f64], p: &Parameters) -> Vec<f64> {
            self.0.residual(q, p)
        }
        fn jacobian(&self, q: &[f64], p: &Parameters) -> SparseMatrix {
            self.0.jacobian(q, p).scaled(-1.0)
        }
        fn param_gradient(&self, q: &[f64], p: &Parameters, j: usize) -> Vec<f64> {
            self.0.param_gradient(q, p, j)
        }
        fn hessian_apply(&self, q: &[f64], p: &Parameters, u: &[f64], v: &[f64]) -> Vec<f64> {
            self.0.hessian_apply(q, p, u, v)
        }
        fn third_apply(&self, q: &[f64], p: &Parameters, u: &[f64], v: &[f64], w: &[f64]) -> Vec<f64> {
            self.0.third_apply(q, p, u, v, w)
        }
        fn mixed_param_jacobian_apply(&self, q: &[f64], p: &Parameters, j: usize, v: &[f64]) -> Vec<f64> {
            self.0.mixed_param_jacobian_apply(q, p, j, v)
        }
        fn hessian_matrix(&self, q: &[f64], p: &Parameters, u: &[f64]) -> SparseMatrix {
            self.0.hessian_matrix(q, p, u)
        }
        fn third_matrix(&self, q: &[f64], p: &Parameters, u: &[f64], v: &[f64]) -> SparseMatrix {
            self.0.third_matrix(q, p, u, v)
        }
    }

    #[test]
    fn wrong_jacobian_is_reported() {
        let pb = WrongJacobian(brusselator_1d(11).unwrap());
        let p = pb.default_parameters();
        let q: Vec<f64> = pb.0.initial_guess(&p).iter().map(|x| x * 1.1).collect();
        let rep = check_derivatives(&pb, &q, &p).unwrap();
        assert!(rep.jacobian > 0.5, "{}", rep.jacobian);
    }

    #[test]
    fn non_finite_residual_fails() {
        let pb = brusselator_1d(5).unwrap();
        let p = pb.default_parameters();
        let mut q = pb.initial_guess(&p);
        q[0] = f64::NAN;
        assert!(matches!(check_derivatives(&pb, &q, &p), Err(Error::EvaluationFailure(_))));
    }
}
