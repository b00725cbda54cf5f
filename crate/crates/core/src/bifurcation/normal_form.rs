use num_complex::Complex64;

use super::{BifKind, BifPoint, C, I};
use crate::error::{Error, Result};
use crate::linalg::{BorderedSolver, BorderedSystem, ComplexFactorization, ComplexSparse};
use crate::problem::{
    cdot, cnorm, hessian_apply_c, im, mass_param_gradient_apply_c, mixed_param_jacobian_apply_c, re, third_apply_c,
    to_complex, Problem,
};
use nalgebra::DMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormalFormKind {
    /// `dA/dt = drift . dalpha + beta A^2`
    Quadratic,
    /// `dA/dt = (drift . dalpha) A + beta A |A|^2`, plus `i omega A` for Hopf points.
    Cubic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Onset {
    Supercritical,
    Subcritical,
    Degenerate,
}

impl Onset {
    pub fn as_str(self) -> &'static str {
        match self {
            Onset::Supercritical => "supercritical",
            Onset::Subcritical => "subcritical",
            Onset::Degenerate => "degenerate",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NormalForm {
    /// `d lambda / d alpha_j` for every parameter.
    pub eigen_drift: Vec<C>,
    pub beta: C,
    pub form: NormalFormKind,
    /// `Re beta < 0` means the bifurcating solutions are stable.
    pub onset: Onset,
    /// Label under the opposite sign convention (`Re beta > 0` supercritical).
    pub reversed_onset: Onset,
}

const DEGENERATE_TOL: f64 = 1e-12;

fn onsets(beta: C, form: NormalFormKind) -> (Onset, Onset) {
    if form == NormalFormKind::Quadratic || beta.re.abs() <= DEGENERATE_TOL {
        return (Onset::Degenerate, Onset::Degenerate);
    }
    if beta.re < 0.0 {
        (Onset::Supercritical, Onset::Subcritical)
    } else {
        (Onset::Subcritical, Onset::Supercritical)
    }
}

/// Solves `J x = b` on the complement of the critical mode, with `<adjoint, M x>`
/// fixed to zero.
struct ReducedSolver {
    solver: Option<BorderedSolver>,
    full: Option<ComplexFactorization>,
}

impl ReducedSolver {
    fn new(pb: &dyn Problem, bif: &BifPoint) -> Result<Self> {
        let j = pb.jacobian(&bif.q, &bif.params);
        if bif.kind == BifKind::Hopf {
            return Ok(Self { solver: None, full: Some(ComplexFactorization::new(&ComplexSparse::real(j))?) });
        }
        let m = pb.mass_matrix(&bif.q, &bif.params);
        let col = m.matvec(&re(&bif.direct_mode));
        let row = m.transpose_matvec(&re(&bif.adjoint_mode));
        let sys = BorderedSystem::new(j, vec![col], vec![row], DMatrix::zeros(1, 1))?;
        Ok(Self { solver: Some(BorderedSolver::new(&sys)?), full: None })
    }

    fn solve(&self, b: &[C]) -> Result<Vec<C>> {
        if let Some(f) = &self.full {
            return f.solve(b, false);
        }
        let s = self.solver.as_ref().expect("one solver is set");
        let xr = s.solve(&re(b), &[0.0])?.top;
        let xi = s.solve(&im(b), &[0.0])?.top;
        Ok(to_complex(&xr, Some(&xi)))
    }
}

/// Drift of the critical eigenvalue and nonlinear coefficient at `bif`.
pub fn normal_form(pb: &dyn Problem, bif: &BifPoint) -> Result<NormalForm> {
    if !pb.mass_is_state_independent() {
        return Err(Error::Unsupported("normal forms require a state-independent mass".into()));
    }
    let (q, p) = (&bif.q, &bif.params);
    let (v, w) = (&bif.direct_mode, &bif.adjoint_mode);
    let h = |a: &[C], b: &[C]| hessian_apply_c(pb, q, p, a, b);

    if bif.kind == BifKind::Fold {
        let eigen_drift = (0..p.len())
            .map(|j| -cdot(w, &to_complex(&pb.param_gradient(q, p, j), None)))
            .collect();
        let beta = -0.5 * cdot(w, &h(v, v));
        let (onset, reversed_onset) = onsets(beta, NormalFormKind::Quadratic);
        return Ok(NormalForm { eigen_drift, beta, form: NormalFormKind::Quadratic, onset, reversed_onset });
    }

    let omega = if bif.kind == BifKind::Hopf { bif.omega } else { 0.0 };
    let reduced = ReducedSolver::new(pb, bif)?;
    let mut eigen_drift = Vec::with_capacity(p.len());
    for j in 0..p.len() {
        let shift = reduced.solve(&to_complex(&pb.param_gradient(q, p, j), None))?;
        let mut t = mixed_param_jacobian_apply_c(pb, q, p, j, v);
        let hs = h(v, &shift);
        let dm = mass_param_gradient_apply_c(pb, q, p, j, v);
        for i in 0..t.len() {
            t[i] += I * omega * dm[i] - hs[i];
        }
        eigen_drift.push(-cdot(w, &t));
    }

    let (beta, form) = if bif.kind == BifKind::Hopf {
        let vbar: Vec<C> = v.iter().map(|z| z.conj()).collect();
        let t = third_apply_c(pb, q, p, v, v, &vbar);
        let z0 = reduced.solve(&h(v, &vbar))?;
        let m = ComplexSparse::real(pb.mass_matrix(q, p));
        let a2 = ComplexSparse::real(pb.jacobian(q, p)).add_scaled(&m, C::new(0.0, 2.0 * omega));
        let f2 = ComplexFactorization::new(&a2).map_err(|e| match e {
            Error::SingularMatrix { .. } => Error::Resonance,
            e => e,
        })?;
        let z2 = f2.solve(&h(v, v), false)?;
        let beta = -0.5 * cdot(w, &t) + cdot(w, &h(v, &z0)) + 0.5 * cdot(w, &h(&vbar, &z2));
        (beta, NormalFormKind::Cubic)
    } else {
        let hvv = h(v, v);
        let quad = -0.5 * cdot(w, &hvv);
        if quad.norm() > 1e-8 * (1.0 + cnorm(&hvv)) {
            (quad, NormalFormKind::Quadratic)
        } else {
            let t = third_apply_c(pb, q, p, v, v, v);
            let z = reduced.solve(&hvv)?;
            let beta = -cdot(w, &t) / 6.0 + 0.5 * cdot(w, &h(v, &z));
            (beta, NormalFormKind::Cubic)
        }
    };
    if !beta.is_finite() || eigen_drift.iter().any(|z: &Complex64| !z.is_finite()) {
        return Err(Error::EvaluationFailure("non-finite normal form coefficient".into()));
    }
    let (onset, reversed_onset) = onsets(beta, form);
    Ok(NormalForm { eigen_drift, beta, form, onset, reversed_onset })
}

/// Small-amplitude prediction near a bifurcation point.
#[derive(Debug, Clone, PartialEq)]
pub struct WeaklyNonlinear {
    /// Real amplitude; for Hopf points the modulus of the complex amplitude.
    pub amplitude: f64,
    /// Predicted frequency (zero for steady bifurcations).
    pub omega: f64,
    /// Mean state for the predicted solution.
    pub q_mean: Vec<f64>,
    /// First-harmonic coefficient `A q_hat`, so that the orbit is
    /// `q_mean + 2 Re(first_harmonic e^{i omega t})`.
    pub first_harmonic: Vec<C>,
    /// Steady states `q + A q_hat` for each admissible sign of `A`.
    pub steady_states: Vec<Vec<f64>>,
}

/// Amplitude and state prediction for parameter offset `delta` (one entry per parameter).
pub fn weakly_nonlinear_predict(bif: &BifPoint, delta: &[f64]) -> Result<WeaklyNonlinear> {
    let nf = bif
        .normal_form
        .as_ref()
        .ok_or_else(|| Error::InvalidConfiguration("bifurcation point carries no normal form".into()))?;
    if delta.len() != nf.eigen_drift.len() {
        return Err(Error::DimensionMismatch { expected: nf.eigen_drift.len(), found: delta.len() });
    }
    let forcing: C = nf.eigen_drift.iter().zip(delta).map(|(d, x)| d * x).sum();
    let mut out = WeaklyNonlinear {
        amplitude: 0.0,
        omega: bif.omega,
        q_mean: bif.q.clone(),
        first_harmonic: vec![C::new(0.0, 0.0); bif.q.len()],
        steady_states: Vec::new(),
    };
    if delta.iter().all(|d| *d == 0.0) {
        out.steady_states.push(bif.q.clone());
        return Ok(out);
    }
    if nf.beta.norm() == 0.0 || (bif.kind == BifKind::Hopf && nf.beta.re == 0.0) {
        return Err(Error::InvalidConfiguration("degenerate normal form (beta = 0)".into()));
    }
    if bif.kind == BifKind::Pitchfork && nf.form == NormalFormKind::Quadratic {
        let a = (-forcing / nf.beta).re;
        let mode = re(&bif.direct_mode);
        out.amplitude = a.abs();
        out.steady_states.push(bif.q.clone());
        out.steady_states.push(bif.q.iter().zip(&mode).map(|(x, m)| x + a * m).collect());
        return Ok(out);
    }
    let a2 = if bif.kind == BifKind::Hopf {
        -forcing.re / nf.beta.re
    } else {
        (-forcing / nf.beta).re
    };
    if !(a2 > 0.0) {
        return Err(Error::NoOrbit);
    }
    let a = a2.sqrt();
    out.amplitude = a;
    if bif.kind == BifKind::Hopf {
        out.omega = bif.omega + forcing.im + nf.beta.im * a2;
        out.first_harmonic = bif.direct_mode.iter().map(|z| z * a).collect();
    } else {
        let mode = re(&bif.direct_mode);
        for s in [a, -a] {
            out.steady_states.push(bif.q.iter().zip(&mode).map(|(x, m)| x + s * m).collect());
        }
    }
    Ok(out)
}
