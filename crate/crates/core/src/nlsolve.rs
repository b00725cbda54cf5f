//! Newton iteration for steady states, with deflation for locating
//! additional roots.

use crate::error::{DivergenceReport, Error, Result};
use crate::linalg::factor;
use crate::problem::{norm, Parameters, Problem};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Damping {
    /// Full Newton step.
    None,
    /// Multiply the step by `shrink` until the residual norm decreases,
    /// stopping once the step fraction would drop below `min_step`.
    Backtracking { shrink: f64, min_step: f64 },
}

impl Damping {
    /// Halving with at most 8 reductions.
    pub fn backtracking() -> Self {
        Damping::Backtracking { shrink: 0.5, min_step: 0.5f64.powi(8) }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NewtonSettings {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_iterations: usize,
    pub damping: Damping,
    /// Keep every iterate in the outcome.
    pub record_iterates: bool,
}

impl Default for NewtonSettings {
    fn default() -> Self {
        Self { abs_tol: 1e-10, rel_tol: 1e-12, max_iterations: 25, damping: Damping::None, record_iterates: false }
    }
}

impl NewtonSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.abs_tol > 0.0 && self.rel_tol > 0.0) {
            return Err(Error::InvalidConfiguration("newton tolerances must be positive".into()));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidConfiguration("max_iterations must be at least 1".into()));
        }
        if let Damping::Backtracking { shrink, min_step } = self.damping {
            if !(shrink > 0.0 && shrink < 1.0 && min_step > 0.0 && min_step <= 1.0) {
                return Err(Error::InvalidConfiguration("backtracking needs 0 < shrink < 1 and 0 < min_step <= 1".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NewtonOutcome {
    pub q: Vec<f64>,
    pub iterations: usize,
    /// `||R||` before each iteration and at the end.
    pub residual_history: Vec<f64>,
    /// Every iterate including `q0`, when requested.
    pub iterates: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeflationSettings {
    pub order_p: f64,
    pub shift_a: f64,
    pub known_solutions: Vec<Vec<f64>>,
}

impl Default for DeflationSettings {
    fn default() -> Self {
        Self { order_p: 2.0, shift_a: 1.0, known_solutions: Vec::new() }
    }
}

impl DeflationSettings {
    pub fn with_known(known_solutions: Vec<Vec<f64>>) -> Self {
        Self { known_solutions, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.order_p >= 1.0) || !(self.shift_a >= 0.0) {
            return Err(Error::InvalidConfiguration("deflation needs order_p >= 1 and shift_a >= 0".into()));
        }
        Ok(())
    }
}

const COINCIDENT: f64 = 1e-12;

/// Scalar factor turning the undeflated Newton step into the deflated one.
pub fn deflation_scale(q: &[f64], step: &[f64], settings: &DeflationSettings) -> Result<f64> {
    let (p, a) = (settings.order_p, settings.shift_a);
    let mut scale = 1.0;
    for known in &settings.known_solutions {
        if known.len() != q.len() {
            return Err(Error::DimensionMismatch { expected: q.len(), found: known.len() });
        }
        let diff: Vec<f64> = q.iter().zip(known).map(|(x, y)| x - y).collect();
        let d = norm(&diff);
        if d < COINCIDENT {
            return Err(Error::DeflationSingular);
        }
        let proj: f64 = diff.iter().zip(step).map(|(x, s)| x * s).sum();
        let base = 1.0 + a * d.powf(p);
        let denom = base - p * proj / (d * d);
        if denom == 0.0 || !denom.is_finite() {
            return Err(Error::DeflationSingular);
        }
        scale *= base / denom;
    }
    Ok(scale)
}

fn divergence(iterations: usize, q: Vec<f64>, history: Vec<f64>, reason: &str) -> Error {
    Error::Divergence(DivergenceReport {
        iterations,
        residual_norm: history.last().copied().unwrap_or(f64::NAN),
        iterate: q,
        history,
        reason: reason.into(),
    })
}

fn residual_norm(pb: &dyn Problem, q: &[f64], p: &Parameters) -> f64 {
    let n = norm(&pb.residual(q, p));
    if n.is_finite() {
        n
    } else {
        f64::INFINITY
    }
}

/// Shared driver; `modify` rescales the raw Newton step in place.
fn iterate(
    pb: &dyn Problem,
    q0: &[f64],
    p: &Parameters,
    settings: &NewtonSettings,
    modify: &mut dyn FnMut(&[f64], &mut Vec<f64>) -> Result<()>,
) -> Result<NewtonOutcome> {
    settings.validate()?;
    let n = pb.dim();
    if q0.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: q0.len() });
    }
    let mut q = q0.to_vec();
    let mut r = pb.residual(&q, p);
    let mut rn = norm(&r);
    let mut history = vec![rn];
    let mut iterates = if settings.record_iterates { vec![q.clone()] } else { Vec::new() };
    if !rn.is_finite() {
        return Err(divergence(0, q, history, "non-finite residual"));
    }
    let tol = settings.abs_tol.max(settings.rel_tol * rn);
    let mut it = 0;
    while rn > tol {
        if it == settings.max_iterations {
            return Err(divergence(it, q, history, "maximum iterations reached"));
        }
        let f = match factor(&pb.jacobian(&q, p)) {
            Ok(f) => f,
            Err(Error::SingularMatrix { .. }) if it == 0 => return Err(Error::SingularJacobian { iterate: q }),
            Err(Error::SingularMatrix { .. }) => return Err(divergence(it, q, history, "singular jacobian")),
            Err(e) => return Err(e),
        };
        let mut step = f.solve(&r, false)?;
        match modify(&q, &mut step) {
            Ok(()) => {}
            Err(Error::DeflationSingular) => {
                return Err(divergence(it, q, history, "iterate reached a deflated solution"))
            }
            Err(e) => return Err(e),
        }
        let trial = |t: f64| -> Vec<f64> { q.iter().zip(&step).map(|(x, s)| x - t * s).collect() };
        let next = match settings.damping {
            Damping::None => trial(1.0),
            Damping::Backtracking { shrink, min_step } => {
                let mut t = 1.0;
                let mut cand = trial(t);
                while residual_norm(pb, &cand, p) >= rn && t * shrink >= min_step {
                    t *= shrink;
                    cand = trial(t);
                }
                cand
            }
        };
        q = next;
        it += 1;
        r = pb.residual(&q, p);
        rn = norm(&r);
        history.push(rn);
        if settings.record_iterates {
            iterates.push(q.clone());
        }
        if !rn.is_finite() {
            return Err(divergence(it, q, history, "non-finite residual"));
        }
    }
    Ok(NewtonOutcome { q, iterations: it, residual_history: history, iterates })
}

/// Solves `R(q; p) = 0` from `q0`.
pub fn newton_solve(pb: &dyn Problem, q0: &[f64], p: &Parameters, settings: &NewtonSettings) -> Result<NewtonOutcome> {
    iterate(pb, q0, p, settings, &mut |_, _| Ok(()))
}

/// Newton iteration whose steps are rescaled so that known roots repel the
/// iterate. The returned root satisfies the undeflated tolerance and lies
/// further than `10 * abs_tol` from every known solution.
pub fn deflated_newton_solve(
    pb: &dyn Problem,
    q0: &[f64],
    p: &Parameters,
    settings: &NewtonSettings,
    deflation: &DeflationSettings,
) -> Result<NewtonOutcome> {
    deflation.validate()?;
    let out = iterate(pb, q0, p, settings, &mut |q, step| {
        let s = deflation_scale(q, step, deflation)?;
        for v in step.iter_mut() {
            *v *= s;
        }
        Ok(())
    })?;
    let min_dist = deflation
        .known_solutions
        .iter()
        .map(|k| norm(&out.q.iter().zip(k).map(|(a, b)| a - b).collect::<Vec<_>>()))
        .fold(f64::INFINITY, f64::min);
    if min_dist <= 10.0 * settings.abs_tol {
        return Err(divergence(out.iterations, out.q, out.residual_history, "converged to a deflated solution"));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::SparseMatrix;
    use crate::problem::{brusselator_1d, scalar_fold, LinearProblem};

    fn fold_at(a: f64) -> (crate::problem::ScalarPoly, Parameters) {
        let pb = scalar_fold();
        let p = Parameters::new([("a1", a)], 0).unwrap();
        (pb, p)
    }

    #[test]
    fn linear_converges_in_one_step() {
        let c = vec![1.5, -2.0, 0.25];
        let pb = LinearProblem::new(SparseMatrix::identity(3), c.clone());
        let p = pb.default_parameters();
        let out = newton_solve(&pb, &[10.0, 3.0, -7.0], &p, &NewtonSettings::default()).unwrap();
        assert_eq!(out.iterations, 1);
        for (a, b) in out.q.iter().zip(&c) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn fold_converges_quadratically() {
        let (pb, p) = fold_at(-1.0);
        let s = NewtonSettings { abs_tol: 1e-14, record_iterates: true, ..Default::default() };
        let out = newton_solve(&pb, &[2.0], &p, &s).unwrap();
        assert!((out.q[0] - 1.0).abs() < 1e-14);
        let errs: Vec<f64> = out.iterates.iter().map(|q| (q[0] - 1.0).abs()).filter(|e| *e > 1e-15).collect();
        let k = errs.len();
        assert!(k >= 3);
        let rate = (errs[k - 1].ln() - errs[k - 2].ln()) / (errs[k - 2].ln() - errs[k - 3].ln());
        assert!(rate >= 1.8, "rate {rate}");
    }

    #[test]
    fn fold_without_real_root_diverges() {
        let (pb, p) = fold_at(1.0);
        let err = newton_solve(&pb, &[1.0], &p, &NewtonSettings::default()).unwrap_err();
        assert!(matches!(err, Error::Divergence(_)), "{err:?}");
        let err = newton_solve(&pb, &[0.7], &p, &NewtonSettings::default()).unwrap_err();
        match err {
            Error::Divergence(r) => assert!(r.residual_norm >= 1.0),
            e => panic!("{e:?}"),
        }
    }

    #[test]
    fn singular_initial_jacobian() {
        let (pb, p) = fold_at(-1.0);
        assert!(matches!(
            newton_solve(&pb, &[0.0], &p, &NewtonSettings::default()),
            Err(Error::SingularJacobian { .. })
        ));
    }

    #[test]
    fn scale_examples() {
        let d = DeflationSettings::default();
        assert_eq!(deflation_scale(&[2.0], &[0.5], &d).unwrap(), 1.0);
        let d = DeflationSettings::with_known(vec![vec![1.0]]);
        assert!((deflation_scale(&[2.0], &[0.5], &d).unwrap() - 2.0).abs() < 1e-15);
        let d = DeflationSettings::with_known(vec![vec![0.0, 0.0, 0.0], vec![1.0, 1.0, 0.0]]);
        assert_eq!(deflation_scale(&[1.0, 0.0, 0.0], &[0.0, 0.0, 3.0], &d).unwrap(), 1.0);
        assert!(matches!(deflation_scale(&[1.0, 1.0, 0.0], &[0.0, 1.0, 0.0], &d), Err(Error::DeflationSingular)));
    }

    #[test]
    fn deflation_finds_other_root() {
        let (pb, p) = fold_at(-1.0);
        let d = DeflationSettings::with_known(vec![vec![1.0]]);
        let out = deflated_newton_solve(&pb, &[2.0], &p, &NewtonSettings::default(), &d).unwrap();
        assert!((out.q[0] + 1.0).abs() < 1e-10, "{:?}", out.q);
    }

    #[test]
    fn empty_deflation_is_bitwise_newton() {
        let (pb, p) = fold_at(-1.0);
        let s = NewtonSettings { record_iterates: true, ..Default::default() };
        let a = newton_solve(&pb, &[3.7], &p, &s).unwrap();
        let b = deflated_newton_solve(&pb, &[3.7], &p, &s, &DeflationSettings::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn deflated_unique_equilibrium_diverges() {
        let pb = brusselator_1d(21).unwrap();
        let p = pb.default_parameters().with_value("L", 0.4).unwrap();
        let base = pb.initial_guess(&p);
        let q0: Vec<f64> = base.iter().enumerate().map(|(i, v)| v + 0.05 * (i as f64).sin()).collect();
        let d = DeflationSettings::with_known(vec![base]);
        let s = NewtonSettings { max_iterations: 40, ..Default::default() };
        assert!(matches!(deflated_newton_solve(&pb, &q0, &p, &s, &d), Err(Error::Divergence(_))));
    }

    #[test]
    fn backtracking_keeps_descent() {
        let (pb, p) = fold_at(-1.0);
        let s = NewtonSettings { damping: Damping::backtracking(), record_iterates: true, ..Default::default() };
        let out = newton_solve(&pb, &[0.05], &p, &s).unwrap();
        assert!((out.q[0] - 1.0).abs() < 1e-10);
        assert!(out.residual_history.windows(2).all(|w| w[1] < w[0]));
    }
}
