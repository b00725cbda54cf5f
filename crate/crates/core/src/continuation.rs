//! Pseudo-arclength continuation with a tangent predictor and a
//! Moore-Penrose corrector.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{BorderedSolver, BorderedSystem, Factorization};
use crate::nlsolve::{newton_solve, NewtonSettings};
use crate::problem::{dot, norm, Parameters, Problem};
use crate::stability::{eigs_with, EigenPair, EigenSettings};

/// Null vector `[y_q, y_alpha]` of `[dR/dq, dR/dalpha]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tangent {
    pub y_q: Vec<f64>,
    pub y_alpha: f64,
}

impl Tangent {
    pub fn norm(&self) -> f64 {
        (dot(&self.y_q, &self.y_q) + self.y_alpha * self.y_alpha).sqrt()
    }

    pub fn normalized(&self) -> Tangent {
        let s = self.norm();
        Tangent { y_q: self.y_q.iter().map(|v| v / s).collect(), y_alpha: self.y_alpha / s }
    }

    pub fn dot(&self, other: &Tangent) -> f64 {
        dot(&self.y_q, &other.y_q) + self.y_alpha * other.y_alpha
    }

    pub fn flipped(&self) -> Tangent {
        Tangent { y_q: self.y_q.iter().map(|v| -v).collect(), y_alpha: -self.y_alpha }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CandidateKind {
    /// A complex pair crossed the imaginary axis.
    Hopf,
    /// A real eigenvalue crossed zero.
    RealZero,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PointFlag {
    /// Eigenvalue crossing between the previous point and this one.
    Crossing(CandidateKind),
}

#[derive(Debug, Clone, PartialEq)]
pub struct BranchPoint {
    pub q: Vec<f64>,
    pub params: Parameters,
    pub tangent: Tangent,
    pub step_used: f64,
    pub corrector_iterations: usize,
    pub eigenvalues: Option<Vec<Complex64>>,
    pub flags: Vec<PointFlag>,
}

impl BranchPoint {
    pub fn alpha(&self) -> f64 {
        self.params.active_value()
    }
}

/// Candidate bifurcation bracketed by two consecutive branch points and
/// refined along the branch.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub kind: CandidateKind,
    /// Indices of the bracketing points.
    pub bracket: (usize, usize),
    pub q: Vec<f64>,
    pub params: Parameters,
    /// Critical eigenpair (with adjoint) at the refined point.
    pub eigenpair: EigenPair,
    pub refined: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum BranchStatus {
    MaxPoints,
    ParameterBound,
    StepTooSmall(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub points: Vec<BranchPoint>,
    pub parameter: String,
    pub problem: String,
    pub settings_hash: u64,
    pub status: BranchStatus,
    pub candidates: Vec<Candidate>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepControl {
    pub h0: f64,
    pub h_min: f64,
    pub h_max: f64,
    pub target_iterations: usize,
    pub growth_cap: f64,
    pub shrink_cap: f64,
    pub corrector: NewtonSettings,
}

impl Default for StepControl {
    fn default() -> Self {
        Self {
            h0: 0.01,
            h_min: 1e-8,
            h_max: 0.1,
            target_iterations: 3,
            growth_cap: 2.0,
            shrink_cap: 0.5,
            corrector: NewtonSettings { abs_tol: 1e-10, max_iterations: 10, ..Default::default() },
        }
    }
}

impl StepControl {
    pub fn validate(&self) -> Result<()> {
        let h = self.h0.abs();
        if !(0.0 < self.h_min && self.h_min <= h && h <= self.h_max) {
            return Err(Error::InvalidConfiguration("step control needs 0 < h_min <= |h0| <= h_max".into()));
        }
        if !(self.growth_cap >= 1.0 && self.shrink_cap > 0.0 && self.shrink_cap <= 1.0) {
            return Err(Error::InvalidConfiguration("growth_cap >= 1 and 0 < shrink_cap <= 1 required".into()));
        }
        self.corrector.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stop {
    pub param_min: f64,
    pub param_max: f64,
    pub max_points: usize,
}

impl Default for Stop {
    fn default() -> Self {
        Self { param_min: f64::NEG_INFINITY, param_max: f64::INFINITY, max_points: 100 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonitorSettings {
    pub enabled: bool,
    pub nev: usize,
    pub shift: Complex64,
    /// Secant refinement of detected crossings.
    pub refine: bool,
}

impl Default for MonitorSettings {
    fn default() -> Self {
        Self { enabled: true, nev: 6, shift: Complex64::new(0.0, 0.0), refine: true }
    }
}

fn active_gradient(pb: &dyn Problem, q: &[f64], p: &Parameters) -> Vec<f64> {
    pb.param_gradient(q, p, p.active_index())
}

/// Solves `J y_q = dR/dalpha` with `y_alpha = -1`, reusing `jacobian` when given.
pub fn compute_tangent(pb: &dyn Problem, q: &[f64], p: &Parameters, jacobian: Option<&Factorization>) -> Result<Tangent> {
    let g = active_gradient(pb, q, p);
    let owned;
    let f = match jacobian {
        Some(f) => f,
        None => {
            owned = crate::linalg::factor(&pb.jacobian(q, p)).map_err(|e| match e {
                Error::SingularMatrix { .. } => Error::TangentAtSingularity,
                e => e,
            })?;
            &owned
        }
    };
    let y_q = f.solve(&g, false)?;
    Ok(Tangent { y_q, y_alpha: -1.0 })
}

/// Tangent predictor displaced by exactly `h` along the normalized tangent.
pub fn predict(point: &BranchPoint, h: f64) -> (Vec<f64>, Parameters) {
    let t = &point.tangent;
    let s = h / t.norm();
    let q = point.q.iter().zip(&t.y_q).map(|(a, b)| a + s * b).collect();
    let mut p = point.params.clone();
    p.set_active_value(point.alpha() + s * t.y_alpha);
    (q, p)
}

fn bordered(pb: &dyn Problem, q: &[f64], p: &Parameters, t: &Tangent) -> Result<BorderedSolver> {
    let sys = BorderedSystem::new(
        pb.jacobian(q, p),
        vec![active_gradient(pb, q, p)],
        vec![t.y_q.clone()],
        DMatrix::from_element(1, 1, t.y_alpha),
    )?;
    BorderedSolver::new(&sys)
}

/// Converged corrector result.
#[derive(Debug, Clone, PartialEq)]
pub struct Corrected {
    pub q: Vec<f64>,
    pub params: Parameters,
    /// Null vector at the converged point, oriented along the input tangent.
    pub tangent: Tangent,
    pub iterations: usize,
    pub residual_history: Vec<f64>,
}

/// Moore-Penrose corrector: each step is orthogonal to the current tangent,
/// which is refreshed from the same bordered operator.
pub fn correct_moore_penrose(
    pb: &dyn Problem,
    q0: &[f64],
    p0: &Parameters,
    tangent: &Tangent,
    settings: &NewtonSettings,
) -> Result<Corrected> {
    settings.validate()?;
    let mut q = q0.to_vec();
    let mut p = p0.clone();
    let mut t = tangent.normalized();
    let mut r = pb.residual(&q, &p);
    let mut history = vec![norm(&r)];
    let r0 = history[0];
    let fail = |history: Vec<f64>| Error::CorrectorFailure { trace: history };
    let mut it = 0;
    loop {
        let rn = *history.last().unwrap();
        if !rn.is_finite() || rn > 1e3 * r0.max(settings.abs_tol) {
            return Err(fail(history));
        }
        let solver = bordered(pb, &q, &p, &t).map_err(|_| fail(history.clone()))?;
        let tan = solver.solve(&vec![0.0; q.len()], &[1.0]).map_err(|_| fail(history.clone()))?;
        let mut fresh = Tangent { y_q: tan.top, y_alpha: tan.bottom[0] }.normalized();
        if fresh.dot(&t) < 0.0 {
            fresh = fresh.flipped();
        }
        if rn <= settings.abs_tol {
            return Ok(Corrected { q, params: p, tangent: fresh, iterations: it, residual_history: history });
        }
        if it == settings.max_iterations {
            return Err(fail(history));
        }
        let step = solver.solve(&r, &[0.0]).map_err(|_| fail(history.clone()))?;
        for (qi, d) in q.iter_mut().zip(&step.top) {
            *qi -= d;
        }
        p.set_active_value(p.active_value() - step.bottom[0]);
        t = fresh;
        it += 1;
        r = pb.residual(&q, &p);
        history.push(norm(&r));
    }
}

/// Iteration-count step adaptation, preserving the sign of `h`.
pub fn adapt_step(h: f64, corrector_iterations: usize, control: &StepControl) -> f64 {
    let e = (control.target_iterations as f64 - corrector_iterations as f64) / 2.0;
    let f = 2f64.powf(e).clamp(control.shrink_cap, control.growth_cap);
    (h.abs() * f).clamp(control.h_min, control.h_max).copysign(h)
}

/// Newton-solves `q0` at fixed parameters and attaches a tangent oriented so
/// that a positive step increases the active parameter.
pub fn start_point(pb: &dyn Problem, q0: &[f64], p: &Parameters, settings: &NewtonSettings) -> Result<BranchPoint> {
    let sol = newton_solve(pb, q0, p, settings)?;
    let t = compute_tangent(pb, &sol.q, p, None)?.flipped();
    Ok(BranchPoint {
        q: sol.q,
        params: p.clone(),
        tangent: t,
        step_used: 0.0,
        corrector_iterations: sol.iterations,
        eigenvalues: None,
        flags: vec![],
    })
}

fn settings_hash(pb: &dyn Problem, control: &StepControl, stop: &Stop, monitor: &MonitorSettings) -> u64 {
    let mut h = DefaultHasher::new();
    pb.name().hash(&mut h);
    format!("{control:?}{stop:?}{monitor:?}").hash(&mut h);
    h.finish()
}

fn is_real(z: Complex64) -> bool {
    z.im.abs() <= 1e-8 * z.norm().max(1.0)
}

/// Eigenpairs near `shift`, nudging the shift off an exact eigenvalue.
pub(crate) fn monitored_eigs(
    pb: &dyn Problem,
    q: &[f64],
    p: &Parameters,
    shift: Complex64,
    nev: usize,
    want_adjoint: bool,
) -> Result<Vec<EigenPair>> {
    let nev = nev.min(pb.dim());
    let mut s = shift;
    for attempt in 0..4 {
        let settings = EigenSettings { shift: s, nev, want_adjoint, ..Default::default() };
        match eigs_with(pb, q, p, &settings) {
            Err(Error::SingularShift) => s += Complex64::new(1e-7 * 10f64.powi(attempt), 0.0),
            r => return r,
        }
    }
    Err(Error::SingularShift)
}

fn unstable_counts(eigs: &[Complex64]) -> (usize, usize) {
    let real = eigs.iter().filter(|z| is_real(**z) && z.re > 0.0).count();
    let complex = eigs.iter().filter(|z| !is_real(**z) && z.im > 0.0 && z.re > 0.0).count();
    (real, complex)
}

/// Traces a branch from a converged start point.
pub fn trace_branch(
    pb: &dyn Problem,
    start: &BranchPoint,
    control: &StepControl,
    stop: &Stop,
    monitor: &MonitorSettings,
) -> Result<Branch> {
    control.validate()?;
    if stop.max_points == 0 {
        return Err(Error::InvalidConfiguration("max_points must be at least 1".into()));
    }
    let mut first = start.clone();
    if monitor.enabled {
        let e = monitored_eigs(pb, &first.q, &first.params, monitor.shift, monitor.nev, false)?;
        first.eigenvalues = Some(e.iter().map(|x| x.lambda).collect());
    }
    let mut branch = Branch {
        points: vec![first],
        parameter: start.params.active_name().to_string(),
        problem: pb.name().to_string(),
        settings_hash: settings_hash(pb, control, stop, monitor),
        status: BranchStatus::MaxPoints,
        candidates: vec![],
    };
    let mut h = control.h0;
    while branch.points.len() < stop.max_points {
        let prev = branch.points.last().unwrap();
        let (qg, pg) = predict(prev, h);
        let accepted = match correct_moore_penrose(pb, &qg, &pg, &prev.tangent, &control.corrector) {
            Ok(c) => {
                let dq: f64 = c.q.iter().zip(&prev.q).map(|(a, b)| (a - b).powi(2)).sum();
                let da = c.params.active_value() - prev.alpha();
                let dist = (dq + da * da).sqrt();
                if dist > 1.5 * control.h_max || dist < control.h_min {
                    None
                } else {
                    Some(c)
                }
            }
            Err(Error::CorrectorFailure { .. }) => None,
            Err(e) => return Err(e),
        };
        let Some(c) = accepted else {
            h /= 2.0;
            if h.abs() < control.h_min {
                branch.status = BranchStatus::StepTooSmall(format!(
                    "corrector failed with |h| below h_min at {} = {}",
                    branch.parameter,
                    prev.alpha()
                ));
                break;
            }
            continue;
        };
        let alpha = c.params.active_value();
        if alpha < stop.param_min || alpha > stop.param_max {
            branch.status = BranchStatus::ParameterBound;
            break;
        }
        let mut point = BranchPoint {
            q: c.q,
            params: c.params,
            tangent: c.tangent,
            step_used: h,
            corrector_iterations: c.iterations,
            eigenvalues: None,
            flags: vec![],
        };
        if monitor.enabled {
            let e = monitored_eigs(pb, &point.q, &point.params, monitor.shift, monitor.nev, false)?;
            let lams: Vec<Complex64> = e.iter().map(|x| x.lambda).collect();
            if let Some(prev_eigs) = &prev.eigenvalues {
                let (r0, c0) = unstable_counts(prev_eigs);
                let (r1, c1) = unstable_counts(&lams);
                if r0 != r1 {
                    point.flags.push(PointFlag::Crossing(CandidateKind::RealZero));
                }
                if c0 != c1 {
                    point.flags.push(PointFlag::Crossing(CandidateKind::Hopf));
                }
            }
            point.eigenvalues = Some(lams);
        }
        h = adapt_step(h, c.iterations, control);
        let idx = branch.points.len();
        let kinds: Vec<CandidateKind> =
            point.flags.iter().map(|PointFlag::Crossing(k)| *k).collect();
        branch.points.push(point);
        for kind in kinds {
            let cand = refine_candidate(pb, &branch.points[idx - 1], &branch.points[idx], kind, idx, control, monitor)?;
            branch.candidates.push(cand);
        }
    }
    Ok(branch)
}

/// Critical eigenvalue of `kind` with the smallest growth rate magnitude.
fn watched(pairs: &[EigenPair], kind: CandidateKind) -> Option<&EigenPair> {
    pairs
        .iter()
        .filter(|e| match kind {
            CandidateKind::RealZero => is_real(e.lambda),
            CandidateKind::Hopf => !is_real(e.lambda) && e.lambda.im > 0.0,
        })
        .min_by(|a, b| a.lambda.re.abs().total_cmp(&b.lambda.re.abs()))
}

/// Secant iteration on the watched growth rate over arclength between two
/// bracketing points.
fn refine_candidate(
    pb: &dyn Problem,
    before: &BranchPoint,
    after: &BranchPoint,
    kind: CandidateKind,
    idx: usize,
    control: &StepControl,
    monitor: &MonitorSettings,
) -> Result<Candidate> {
    let eval = |s: f64, near: Complex64| -> Result<(Vec<f64>, Parameters, EigenPair)> {
        let (q, p) = if s == 0.0 {
            (before.q.clone(), before.params.clone())
        } else {
            let (qg, pg) = predict(before, s);
            let c = correct_moore_penrose(pb, &qg, &pg, &before.tangent, &control.corrector)?;
            (c.q, c.params)
        };
        let shift = Complex64::new(0.0, near.im);
        let pairs = monitored_eigs(pb, &q, &p, shift, monitor.nev.max(2), true)?;
        let best = watched(&pairs, kind)
            .or_else(|| pairs.first())
            .cloned()
            .ok_or(Error::EigenNotConverged { converged: 0, requested: 1 })?;
        Ok((q, p, best))
    };
    let guess = after
        .eigenvalues
        .as_ref()
        .and_then(|e| {
            e.iter()
                .filter(|z| match kind {
                    CandidateKind::RealZero => is_real(**z),
                    CandidateKind::Hopf => !is_real(**z) && z.im > 0.0,
                })
                .min_by(|a, b| a.re.abs().total_cmp(&b.re.abs()))
                .copied()
        })
        .unwrap_or(Complex64::new(0.0, 0.0));
    let dq: f64 = after.q.iter().zip(&before.q).map(|(a, b)| (a - b).powi(2)).sum();
    let da = after.alpha() - before.alpha();
    let total = (dq + da * da).sqrt().copysign(after.step_used);

    let (q1, p1, e1) = eval(total, guess)?;
    if !monitor.refine {
        return Ok(Candidate { kind, bracket: (idx - 1, idx), q: q1, params: p1, eigenpair: e1, refined: false });
    }
    let (_, _, e0) = eval(0.0, guess)?;
    let (mut s0, mut f0) = (0.0, e0.lambda.re);
    let (mut s1, mut f1) = (total, e1.lambda.re);
    let mut best = (q1, p1, e1);
    for _ in 0..20 {
        if f1.abs() < 1e-8 {
            return Ok(Candidate { kind, bracket: (idx - 1, idx), q: best.0, params: best.1, eigenpair: best.2, refined: true });
        }
        if f1 == f0 {
            break;
        }
        let s2 = s1 - f1 * (s1 - s0) / (f1 - f0);
        let near = best.2.lambda;
        let Ok(next) = eval(s2, near) else { break };
        s0 = s1;
        f0 = f1;
        s1 = s2;
        f1 = next.2.lambda.re;
        best = next;
    }
    let refined = f1.abs() < 1e-8;
    Ok(Candidate { kind, bracket: (idx - 1, idx), q: best.0, params: best.1, eigenpair: best.2, refined })
}
