//! Fold, pitchfork and Hopf points of equilibria via a minimally augmented
//! system built on a scalar criticality function `g`.

mod curve;
mod normal_form;

pub use curve::{trace_bifurcation_curve, BifCurve, Codim2Event, Codim2Kind, CurveSettings};
pub use normal_form::{normal_form, weakly_nonlinear_predict, NormalForm, NormalFormKind, Onset, WeaklyNonlinear};

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::continuation::{Candidate, CandidateKind};
use crate::error::{DivergenceReport, Error, Result};
use crate::linalg::{BorderedSolver, BorderedSystem, ComplexFactorization, ComplexSparse, TripletBuilder};
use crate::problem::{
    cdot, cnorm, hessian_matrix_c, mass_jacobian_apply_c, mass_param_gradient_apply_c, mixed_param_jacobian_apply_c,
    norm, Parameters, Problem,
};

type C = Complex64;

const I: C = C::new(0.0, 1.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BifKind {
    Fold,
    Pitchfork,
    Hopf,
}

impl BifKind {
    pub fn as_str(self) -> &'static str {
        match self {
            BifKind::Fold => "fold",
            BifKind::Pitchfork => "pitchfork",
            BifKind::Hopf => "hopf",
        }
    }
}

/// Which augmented system the locator solves.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LocateKind {
    /// Real zero eigenvalue (fold or branch point).
    Zero,
    Hopf,
}

impl From<CandidateKind> for LocateKind {
    fn from(k: CandidateKind) -> Self {
        match k {
            CandidateKind::Hopf => LocateKind::Hopf,
            CandidateKind::RealZero => LocateKind::Zero,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BifPoint {
    pub kind: BifKind,
    pub q: Vec<f64>,
    pub params: Parameters,
    pub omega: f64,
    /// Normalized so that `<q, M q> = 1`.
    pub direct_mode: Vec<C>,
    /// Normalized so that `<adjoint, M direct> = 1`.
    pub adjoint_mode: Vec<C>,
    pub g_residual: C,
    pub normal_form: Option<NormalForm>,
}

impl BifPoint {
    pub fn alpha(&self) -> f64 {
        self.params.active_value()
    }
}

/// Criticality value with the direct and adjoint vectors of the bordered systems.
#[derive(Debug, Clone, PartialEq)]
pub struct Criticality {
    pub g: C,
    pub direct: Vec<C>,
    pub adjoint: Vec<C>,
}

fn complex_mass(pb: &dyn Problem, q: &[f64], p: &Parameters) -> ComplexSparse {
    ComplexSparse::real(pb.mass_matrix(q, p))
}

/// `i omega M + J`.
fn shifted_operator(pb: &dyn Problem, q: &[f64], p: &Parameters, omega: f64) -> ComplexSparse {
    ComplexSparse::real(pb.jacobian(q, p)).add_scaled(&complex_mass(pb, q, p), C::new(0.0, omega))
}

/// `1/g = <M w, (i omega M + J)^{-1} M v>`, with `q = g (i omega M + J)^{-1} M v`
/// and `q_adj = conj(g) (i omega M + J)^{-H} M w`, so `<M w, q> = <M v, q_adj> = 1`.
pub fn criticality(
    pb: &dyn Problem,
    q: &[f64],
    p: &Parameters,
    omega: f64,
    v_hat: &[C],
    w_hat: &[C],
) -> Result<Criticality> {
    let n = pb.dim();
    for v in [v_hat, w_hat] {
        if v.len() != n {
            return Err(Error::DimensionMismatch { expected: n, found: v.len() });
        }
    }
    if cnorm(v_hat) == 0.0 || cnorm(w_hat) == 0.0 {
        return Err(Error::DegenerateBordering);
    }
    let m = complex_mass(pb, q, p);
    let a = shifted_operator(pb, q, p, omega);
    let mv = m.matvec(v_hat);
    let mw = m.matvec(w_hat);
    match ComplexFactorization::new(&a) {
        Ok(f) => {
            let x = f.solve(&mv, false)?;
            let inv_g = cdot(&mw, &x);
            if !(inv_g.norm() > 1e-14 * cnorm(&mw) * cnorm(&x)) || !inv_g.is_finite() {
                return Err(Error::DegenerateBordering);
            }
            let g = 1.0 / inv_g;
            let y = f.solve(&mw, true)?;
            Ok(Criticality {
                g,
                direct: x.iter().map(|v| g * v).collect(),
                adjoint: y.iter().map(|v| g.conj() * v).collect(),
            })
        }
        Err(Error::SingularMatrix { .. }) => criticality_bordered(&a, &mv, &mw),
        Err(e) => Err(e),
    }
}

/// Direct bordered form, used when the shifted operator is exactly singular.
fn criticality_bordered(a: &ComplexSparse, mv: &[C], mw: &[C]) -> Result<Criticality> {
    let n = a.dim();
    let mut re = TripletBuilder::new(n + 1, n + 1);
    let mut im = TripletBuilder::new(n + 1, n + 1);
    re.add_block(0, 0, &a.re, -1.0);
    if let Some(ai) = &a.im {
        im.add_block(0, 0, ai, -1.0);
    }
    for i in 0..n {
        re.push(i, n, mv[i].re);
        im.push(i, n, mv[i].im);
        re.push(n, i, mw[i].re);
        im.push(n, i, -mw[i].im);
    }
    let b = ComplexSparse { re: re.build(), im: Some(im.build()) };
    let f = ComplexFactorization::new(&b).map_err(|_| Error::DegenerateBordering)?;
    let mut rhs = vec![C::new(0.0, 0.0); n + 1];
    rhs[n] = C::new(1.0, 0.0);
    let x = f.solve(&rhs, false)?;
    let y = f.solve(&rhs, true)?;
    Ok(Criticality { g: x[n], direct: x[..n].to_vec(), adjoint: y[..n].to_vec() })
}

/// Derivatives of `g` with respect to the state, selected parameters and `omega`.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientG {
    /// `dg = sum_j dq[j] * delta_q[j]` for real `delta_q`.
    pub dq: Vec<C>,
    pub dparams: Vec<C>,
    pub domega: C,
}

pub fn g_gradient(
    pb: &dyn Problem,
    q: &[f64],
    p: &Parameters,
    omega: f64,
    crit: &Criticality,
    params: &[usize],
) -> GradientG {
    let n = pb.dim();
    let (qh, qa) = (&crit.direct, &crit.adjoint);
    let h = hessian_matrix_c(pb, q, p, qh);
    let mut dq: Vec<C> = h.adjoint_matvec(qa).into_iter().map(|z| z.conj()).collect();
    if !pb.mass_is_state_independent() && omega != 0.0 {
        let mut e = vec![C::new(0.0, 0.0); n];
        for j in 0..n {
            e[j] = C::new(1.0, 0.0);
            let dm = mass_jacobian_apply_c(pb, q, p, &e, qh);
            dq[j] += I * omega * cdot(qa, &dm);
            e[j] = C::new(0.0, 0.0);
        }
    }
    let dparams = params
        .iter()
        .map(|&j| {
            let mut v = mixed_param_jacobian_apply_c(pb, q, p, j, qh);
            if omega != 0.0 {
                let dm = mass_param_gradient_apply_c(pb, q, p, j, qh);
                v.iter_mut().zip(&dm).for_each(|(a, b)| *a += I * omega * b);
            }
            cdot(qa, &v)
        })
        .collect();
    let mq = complex_mass(pb, q, p).matvec(qh);
    let domega = I * cdot(qa, &mq);
    GradientG { dq, dparams, domega }
}

/// Unknowns of the augmented system: the state, the active parameter and,
/// for Hopf points, the frequency.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct AugState {
    pub q: Vec<f64>,
    pub params: Parameters,
    pub omega: f64,
}

/// Newton operator and right-hand side of the augmented system, optionally
/// extended by a pseudo-arclength row in a second parameter.
pub(crate) struct AugSystem {
    pub system: BorderedSystem,
    pub rhs_top: Vec<f64>,
    pub rhs_bottom: Vec<f64>,
    pub crit: Criticality,
}

pub(crate) fn aug_system(
    pb: &dyn Problem,
    st: &AugState,
    hopf: bool,
    seeds: (&[C], &[C]),
    second: Option<(usize, &[f64])>,
) -> Result<AugSystem> {
    let (q, p, omega) = (&st.q, &st.params, st.omega);
    let n = pb.dim();
    let a1 = p.active_index();
    let crit = criticality(pb, q, p, omega, seeds.0, seeds.1)?;
    let mut pidx = vec![a1];
    if let Some((a2, _)) = second {
        pidx.push(a2);
    }
    let gg = g_gradient(pb, q, p, omega, &crit, &pidx);

    let mut cols = vec![pb.param_gradient(q, p, a1)];
    let mut rows = vec![gg.dq.iter().map(|z| z.re).collect::<Vec<f64>>()];
    let mut corner_rows: Vec<Vec<f64>> = vec![vec![gg.dparams[0].re]];
    let mut bottom = vec![crit.g.re];
    if hopf {
        cols.push(vec![0.0; n]);
        rows.push(gg.dq.iter().map(|z| z.im).collect());
        corner_rows[0].push(gg.domega.re);
        corner_rows.push(vec![gg.dparams[0].im, gg.domega.im]);
        bottom.push(crit.g.im);
    }
    if let Some((a2, t)) = second {
        cols.push(pb.param_gradient(q, p, a2));
        corner_rows[0].push(gg.dparams[1].re);
        if hopf {
            corner_rows[1].push(gg.dparams[1].im);
        }
        rows.push(t[..n].to_vec());
        corner_rows.push(t[n..].to_vec());
        bottom.push(0.0);
    }
    let k = cols.len();
    let corner = DMatrix::from_fn(k, k, |i, j| corner_rows[i][j]);
    let system = BorderedSystem::new(pb.jacobian(q, p), cols, rows, corner)?;
    Ok(AugSystem { system, rhs_top: pb.residual(q, p), rhs_bottom: bottom, crit })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocatorSettings {
    pub tol: f64,
    pub max_iterations: usize,
    /// Hopf frequencies below this are treated as collapsed.
    pub omega_floor: f64,
    pub compute_normal_form: bool,
    /// Relative threshold separating folds from branch points.
    pub class_tol: f64,
}

impl Default for LocatorSettings {
    fn default() -> Self {
        Self { tol: 1e-10, max_iterations: 30, omega_floor: 1e-6, compute_normal_form: true, class_tol: 1e-6 }
    }
}

fn unit(v: &[C]) -> Vec<C> {
    let s = cnorm(v);
    v.iter().map(|z| z / s).collect()
}

/// Scales modes so that `<q, M q> = 1` (largest entry real positive) and
/// `<q_adj, M q> = 1`.
pub(crate) fn normalize_modes(pb: &dyn Problem, q: &[f64], p: &Parameters, direct: &[C], adjoint: &[C]) -> (Vec<C>, Vec<C>) {
    let m = complex_mass(pb, q, p);
    let big = direct.iter().copied().max_by(|a, b| a.norm().total_cmp(&b.norm())).unwrap_or(C::new(1.0, 0.0));
    let phase = if big.norm() > 0.0 { big.conj() / big.norm() } else { C::new(1.0, 0.0) };
    let d: Vec<C> = direct.iter().map(|z| z * phase).collect();
    let s = cdot(&d, &m.matvec(&d)).re.abs().sqrt();
    let d: Vec<C> = d.iter().map(|z| z / s).collect();
    let c = cdot(adjoint, &m.matvec(&d));
    let a: Vec<C> = adjoint.iter().map(|z| z / c.conj()).collect();
    (d, a)
}

/// Newton iteration on the minimally augmented system from a guess
/// `(q, params, omega)` and bordering seeds `(v_hat, w_hat)`.
pub fn locate_bifurcation(
    pb: &dyn Problem,
    kind: LocateKind,
    q0: &[f64],
    p0: &Parameters,
    omega0: f64,
    seeds: (&[C], &[C]),
    settings: &LocatorSettings,
) -> Result<BifPoint> {
    let hopf = kind == LocateKind::Hopf;
    let n = pb.dim();
    if q0.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: q0.len() });
    }
    let mut st = AugState { q: q0.to_vec(), params: p0.clone(), omega: if hopf { omega0 } else { 0.0 } };
    let (mut v, mut w) = (unit(seeds.0), unit(seeds.1));
    let mut history = Vec::new();
    let mut it = 0;
    loop {
        let sys = aug_system(pb, &st, hopf, (&v, &w), None)?;
        let rn = norm(&sys.rhs_top);
        let gn = sys.crit.g.norm();
        history.push(gn);
        if !rn.is_finite() || !gn.is_finite() {
            return Err(divergence(it, &st, rn, history, "non-finite residual"));
        }
        if rn < settings.tol && gn < settings.tol {
            return finish(pb, st, hopf, sys.crit, settings);
        }
        if it == settings.max_iterations {
            return Err(divergence(it, &st, rn, history, "maximum iterations reached"));
        }
        let step = BorderedSolver::new(&sys.system)?.solve(&sys.rhs_top, &sys.rhs_bottom)?;
        for (qi, d) in st.q.iter_mut().zip(&step.top) {
            *qi -= d;
        }
        let a = st.params.active_value();
        st.params.set_active_value(a - step.bottom[0]);
        if hopf {
            st.omega -= step.bottom[1];
            if st.omega.abs() < settings.omega_floor || st.omega * omega0 < 0.0 {
                return Err(Error::ReclassifyCandidate { omega: st.omega });
            }
        }
        v = unit(&sys.crit.direct);
        w = unit(&sys.crit.adjoint);
        it += 1;
    }
}

fn divergence(it: usize, st: &AugState, rn: f64, history: Vec<f64>, reason: &str) -> Error {
    Error::Divergence(DivergenceReport {
        iterations: it,
        residual_norm: rn,
        iterate: st.q.clone(),
        history,
        reason: reason.into(),
    })
}

fn finish(pb: &dyn Problem, mut st: AugState, hopf: bool, crit: Criticality, settings: &LocatorSettings) -> Result<BifPoint> {
    let (mut d, mut a) = (crit.direct, crit.adjoint);
    let mut g = crit.g;
    if hopf && st.omega < 0.0 {
        st.omega = -st.omega;
        d.iter_mut().for_each(|z| *z = z.conj());
        a.iter_mut().for_each(|z| *z = z.conj());
        g = g.conj();
    }
    let (d, a) = normalize_modes(pb, &st.q, &st.params, &d, &a);
    let mut bif = BifPoint {
        kind: BifKind::Hopf,
        q: st.q,
        params: st.params,
        omega: st.omega,
        direct_mode: d,
        adjoint_mode: a,
        g_residual: g,
        normal_form: None,
    };
    if !hopf {
        bif.kind = classify_zero_eigenvalue(pb, &bif, settings.class_tol);
    }
    if settings.compute_normal_form {
        bif.normal_form = normal_form(pb, &bif).ok();
    }
    Ok(bif)
}

/// Locates the bifurcation bracketed by a continuation candidate, seeding
/// the bordering vectors with its eigenpair.
pub fn locate_from_candidate(pb: &dyn Problem, cand: &Candidate, settings: &LocatorSettings) -> Result<BifPoint> {
    let e = &cand.eigenpair;
    let adj = e.adjoint_mode.clone().unwrap_or_else(|| e.direct_mode.clone());
    locate_bifurcation(
        pb,
        cand.kind.into(),
        &cand.q,
        &cand.params,
        e.lambda.im.abs(),
        (&e.direct_mode, &adj),
        settings,
    )
}

/// Distinguishes a fold from a branch point at a zero-eigenvalue point: a
/// fold when `|<q_adj, dR/dalpha>| > class_tol * max(||dR/dalpha||, 1)`.
pub fn classify_zero_eigenvalue(pb: &dyn Problem, bif: &BifPoint, class_tol: f64) -> BifKind {
    let g = pb.param_gradient(&bif.q, &bif.params, bif.params.active_index());
    let proj: C = bif.adjoint_mode.iter().zip(&g).map(|(a, b)| a.conj() * b).sum();
    if proj.norm() > class_tol * norm(&g).max(1.0) {
        BifKind::Fold
    } else {
        BifKind::Pitchfork
    }
}

#[cfg(test)]
mod tests;
