use super::{aug_system, normal_form, normalize_modes, unit, AugState, BifKind, BifPoint, C};
use crate::continuation::{adapt_step, monitored_eigs, BranchStatus, StepControl, Stop};
use crate::error::{Error, Result};
use crate::linalg::BorderedSolver;
use crate::problem::{dot, norm, Parameters, Problem};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Codim2Kind {
    Bautin,
    BogdanovTakensCandidate,
    CuspCandidate,
    FoldHopfCandidate,
}

impl Codim2Kind {
    pub fn as_str(self) -> &'static str {
        match self {
            Codim2Kind::Bautin => "bautin",
            Codim2Kind::BogdanovTakensCandidate => "bogdanov-takens-candidate",
            Codim2Kind::CuspCandidate => "cusp-candidate",
            Codim2Kind::FoldHopfCandidate => "fold-hopf-candidate",
        }
    }
}

/// Event between points `index - 1` and `index` of a curve.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Codim2Event {
    pub index: usize,
    pub kind: Codim2Kind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurveSettings {
    /// Bounds and point budget apply to the second parameter.
    pub stop: Stop,
    /// Trace both directions from the starting point.
    pub bidirectional: bool,
    /// Hopf frequencies below this flag a Bogdanov-Takens candidate and end the curve.
    pub omega_floor: f64,
    /// Number of eigenvalues monitored for fold-Hopf detection; `None` disables it.
    pub monitor_nev: Option<usize>,
}

impl Default for CurveSettings {
    fn default() -> Self {
        Self {
            stop: Stop::default(),
            bidirectional: false,
            omega_floor: 1e-4,
            monitor_nev: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BifCurve {
    pub points: Vec<BifPoint>,
    pub primary_parameter: String,
    pub second_parameter: String,
    pub codim2_events: Vec<Codim2Event>,
    pub status: BranchStatus,
}

struct Layout {
    n: usize,
    hopf: bool,
    a2: usize,
}

impl Layout {
    fn len(&self) -> usize {
        self.n + 2 + self.hopf as usize
    }

    fn pack(&self, st: &AugState) -> Vec<f64> {
        let mut x = st.q.clone();
        x.push(st.params.active_value());
        if self.hopf {
            x.push(st.omega);
        }
        x.push(st.params.value(self.a2));
        x
    }

    fn unpack(&self, x: &[f64], template: &Parameters) -> AugState {
        let mut params = template.clone();
        params.set_active_value(x[self.n]);
        params.set_value(self.a2, x[self.len() - 1]);
        let omega = if self.hopf { x[self.n + 1] } else { 0.0 };
        AugState { q: x[..self.n].to_vec(), params, omega }
    }
}

fn normalized(v: Vec<f64>) -> Vec<f64> {
    let s = norm(&v);
    v.into_iter().map(|x| x / s).collect()
}

struct Node {
    x: Vec<f64>,
    tangent: Vec<f64>,
    seeds: (Vec<C>, Vec<C>),
    point: BifPoint,
    real_unstable: Option<(usize, usize)>,
    iterations: usize,
}

/// Tangent from `[G; row^T] t = e_last`.
fn tangent_from_row(pb: &dyn Problem, lay: &Layout, st: &AugState, seeds: (&[C], &[C]), row: &[f64]) -> Result<Vec<f64>> {
    let sys = aug_system(pb, st, lay.hopf, seeds, Some((lay.a2, row)))?;
    let k = sys.rhs_bottom.len();
    let mut e = vec![0.0; k];
    e[k - 1] = 1.0;
    let s = BorderedSolver::new(&sys.system)?.solve(&vec![0.0; lay.n], &e)?;
    let t: Vec<f64> = s.top.into_iter().chain(s.bottom).collect();
    if t.iter().any(|v| !v.is_finite()) || norm(&t) == 0.0 {
        return Err(Error::TangentAtSingularity);
    }
    Ok(normalized(t))
}

fn initial_tangent(pb: &dyn Problem, lay: &Layout, st: &AugState, seeds: (&[C], &[C])) -> Result<Vec<f64>> {
    let len = lay.len();
    let mut guesses = Vec::new();
    let mut e = vec![0.0; len];
    e[len - 1] = 1.0;
    guesses.push(e.clone());
    e[len - 1] = 0.0;
    e[lay.n] = 1.0;
    guesses.push(e);
    guesses.push(normalized((0..len).map(|i| 1.0 + 0.1 * (i as f64 * 0.7).sin()).collect()));
    let mut last = Error::TangentAtSingularity;
    for g in guesses {
        match tangent_from_row(pb, lay, st, seeds, &g) {
            Ok(t) => {
                let t = if t[len - 1] < 0.0 { t.into_iter().map(|v| -v).collect() } else { t };
                return Ok(t);
            }
            Err(e) => last = e,
        }
    }
    Err(last)
}

fn make_point(pb: &dyn Problem, kind: BifKind, st: &AugState, crit: &super::Criticality) -> BifPoint {
    let (d, a) = normalize_modes(pb, &st.q, &st.params, &crit.direct, &crit.adjoint);
    let mut bif = BifPoint {
        kind,
        q: st.q.clone(),
        params: st.params.clone(),
        omega: st.omega,
        direct_mode: d,
        adjoint_mode: a,
        g_residual: crit.g,
        normal_form: None,
    };
    bif.normal_form = normal_form(pb, &bif).ok();
    bif
}

fn instability_counts(pb: &dyn Problem, st: &AugState, nev: Option<usize>) -> Option<(usize, usize)> {
    let nev = nev?;
    let pairs = monitored_eigs(pb, &st.q, &st.params, C::new(0.0, 0.0), nev, false).ok()?;
    let scale = pairs.iter().map(|e| e.lambda.norm()).fold(1.0, f64::max);
    let tol = 1e-6 * scale;
    let real = pairs.iter().filter(|e| e.lambda.im.abs() <= tol && e.lambda.re > tol).count();
    let complex = pairs.iter().filter(|e| e.lambda.im > tol && e.lambda.re > tol).count();
    Some((real, complex))
}

enum StepOutcome {
    Accepted(Box<Node>),
    Failed,
    Collapsed,
}

fn correct(
    pb: &dyn Problem,
    lay: &Layout,
    kind: BifKind,
    from: &Node,
    h: f64,
    control: &StepControl,
    settings: &CurveSettings,
) -> StepOutcome {
    let template = &from.point.params;
    let mut x: Vec<f64> = from.x.iter().zip(&from.tangent).map(|(a, t)| a + h * t).collect();
    let mut tangent = from.tangent.clone();
    let mut seeds = from.seeds.clone();
    let tol = control.corrector.abs_tol;
    for it in 0..=control.corrector.max_iterations {
        let st = lay.unpack(&x, template);
        if lay.hopf && st.omega.abs() < settings.omega_floor {
            return StepOutcome::Collapsed;
        }
        let Ok(sys) = aug_system(pb, &st, lay.hopf, (&seeds.0, &seeds.1), Some((lay.a2, &tangent))) else {
            return StepOutcome::Failed;
        };
        let rn = norm(&sys.rhs_top);
        if !rn.is_finite() || !sys.crit.g.is_finite() {
            return StepOutcome::Failed;
        }
        if rn < tol && sys.crit.g.norm() < tol {
            let point = make_point(pb, kind, &st, &sys.crit);
            let real_unstable = instability_counts(pb, &st, settings.monitor_nev);
            let seeds = (unit(&sys.crit.direct), unit(&sys.crit.adjoint));
            return StepOutcome::Accepted(Box::new(Node { x, tangent, seeds, point, real_unstable, iterations: it }));
        }
        if it == control.corrector.max_iterations {
            break;
        }
        let Ok(solver) = BorderedSolver::new(&sys.system) else {
            return StepOutcome::Failed;
        };
        let Ok(step) = solver.solve(&sys.rhs_top, &sys.rhs_bottom) else {
            return StepOutcome::Failed;
        };
        for (xi, d) in x.iter_mut().zip(step.top.iter().chain(&step.bottom)) {
            *xi -= d;
        }
        let k = sys.rhs_bottom.len();
        let mut e = vec![0.0; k];
        e[k - 1] = 1.0;
        if let Ok(s) = solver.solve(&vec![0.0; lay.n], &e) {
            let t: Vec<f64> = s.top.into_iter().chain(s.bottom).collect();
            if t.iter().all(|v| v.is_finite()) && norm(&t) > 0.0 {
                let t = normalized(t);
                tangent = if dot(&t, &tangent) < 0.0 { t.into_iter().map(|v| -v).collect() } else { t };
            }
        }
        seeds = (unit(&sys.crit.direct), unit(&sys.crit.adjoint));
    }
    StepOutcome::Failed
}

fn trace_direction(
    pb: &dyn Problem,
    lay: &Layout,
    kind: BifKind,
    start: &Node,
    sign: f64,
    control: &StepControl,
    settings: &CurveSettings,
    budget: usize,
) -> (Vec<Node>, BranchStatus, bool) {
    let mut nodes: Vec<Node> = Vec::new();
    let mut h = control.h0 * sign;
    let mut collapsed = false;
    let status = loop {
        if nodes.len() >= budget {
            break BranchStatus::MaxPoints;
        }
        let from = nodes.last().unwrap_or(start);
        match correct(pb, lay, kind, from, h, control, settings) {
            StepOutcome::Accepted(node) => {
                let dist = norm(&node.x.iter().zip(&from.x).map(|(a, b)| a - b).collect::<Vec<_>>());
                if dist > 1.5 * control.h_max || dist < 0.5 * h.abs() {
                    h /= 2.0;
                } else {
                    let a2 = node.point.params.value(lay.a2);
                    if a2 < settings.stop.param_min || a2 > settings.stop.param_max {
                        break BranchStatus::ParameterBound;
                    }
                    h = adapt_step(h, node.iterations, control);
                    nodes.push(*node);
                    continue;
                }
            }
            StepOutcome::Failed => h /= 2.0,
            StepOutcome::Collapsed => {
                collapsed = true;
                break BranchStatus::StepTooSmall("frequency collapsed".into());
            }
        }
        if h.abs() < control.h_min {
            break BranchStatus::StepTooSmall(format!("corrector failed at step {:e}", h.abs()));
        }
    };
    (nodes, status, collapsed)
}

fn sign_change(a: f64, b: f64) -> bool {
    a != 0.0 && b != 0.0 && (a > 0.0) != (b > 0.0)
}

fn detect_events(points: &[BifPoint], counts: &[Option<(usize, usize)>], hopf: bool) -> Vec<Codim2Event> {
    let mut events = Vec::new();
    let mut last_beta: Option<f64> = None;
    for (i, p) in points.iter().enumerate() {
        if let Some(nf) = &p.normal_form {
            let b = nf.beta.re;
            if b != 0.0 {
                if let Some(prev) = last_beta {
                    if sign_change(prev, b) {
                        let kind = if hopf { Codim2Kind::Bautin } else { Codim2Kind::CuspCandidate };
                        events.push(Codim2Event { index: i, kind });
                    }
                }
                last_beta = Some(b);
            }
        }
        if i > 0 {
            if let (Some(a), Some(b)) = (counts[i - 1], counts[i]) {
                let changed = if hopf { a.0 != b.0 } else { a.1 != b.1 };
                if changed {
                    events.push(Codim2Event { index: i, kind: Codim2Kind::FoldHopfCandidate });
                }
            }
        }
    }
    events
}

/// Continues a bifurcation point in the plane of its active parameter and
/// `second_param`, flagging codimension-two events along the way.
pub fn trace_bifurcation_curve(
    pb: &dyn Problem,
    bif: &BifPoint,
    second_param: &str,
    control: &StepControl,
    settings: &CurveSettings,
) -> Result<BifCurve> {
    control.validate()?;
    let a1 = bif.params.active_index();
    let a2 = bif.params.index_of(second_param)?;
    if a1 == a2 {
        return Err(Error::InvalidConfiguration("second parameter must differ from the active one".into()));
    }
    let hopf = bif.kind == BifKind::Hopf;
    let lay = Layout { n: pb.dim(), hopf, a2 };
    let st = AugState { q: bif.q.clone(), params: bif.params.clone(), omega: bif.omega };
    let seeds = (unit(&bif.direct_mode), unit(&bif.adjoint_mode));
    let tangent = initial_tangent(pb, &lay, &st, (&seeds.0, &seeds.1))?;
    let mut first = bif.clone();
    if first.normal_form.is_none() {
        first.normal_form = normal_form(pb, &first).ok();
    }
    let start = Node {
        x: lay.pack(&st),
        tangent,
        seeds,
        point: first,
        real_unstable: instability_counts(pb, &st, settings.monitor_nev),
        iterations: 0,
    };
    let budget = settings.stop.max_points.saturating_sub(1);
    let (fwd, fwd_status, fwd_collapsed) = trace_direction(pb, &lay, bif.kind, &start, 1.0, control, settings, budget);
    let (bwd, bwd_collapsed) = if settings.bidirectional {
        let (b, _, c) = trace_direction(pb, &lay, bif.kind, &start, -1.0, control, settings, budget - fwd.len().min(budget));
        (b, c)
    } else {
        (Vec::new(), false)
    };
    let nodes: Vec<Node> = bwd.into_iter().rev().chain(std::iter::once(start)).chain(fwd).collect();
    let counts: Vec<_> = nodes.iter().map(|n| n.real_unstable).collect();
    let points: Vec<BifPoint> = nodes.into_iter().map(|n| n.point).collect();
    let mut events = detect_events(&points, &counts, hopf);
    if bwd_collapsed {
        events.push(Codim2Event { index: 0, kind: Codim2Kind::BogdanovTakensCandidate });
    }
    if fwd_collapsed {
        events.push(Codim2Event { index: points.len() - 1, kind: Codim2Kind::BogdanovTakensCandidate });
    }
    events.sort_by_key(|e| e.index);
    Ok(BifCurve {
        points,
        primary_parameter: bif.params.active_name().to_string(),
        second_parameter: second_param.to_string(),
        codim2_events: events,
        status: fwd_status,
    })
}
