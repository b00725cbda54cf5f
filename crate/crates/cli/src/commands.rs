//! The workflow commands. Each reads its inputs, runs one library
//! operation and writes CSV tables, snapshots, a log and a provenance record.

use std::f64::consts::PI;
use std::path::Path;

use bifkit::bifurcation::{
    locate_bifurcation, normal_form, trace_bifurcation_curve, weakly_nonlinear_predict, BifKind, BifPoint, CurveSettings,
    LocateKind, LocatorSettings,
};
use bifkit::continuation::{
    start_point, trace_branch, BranchPoint, CandidateKind, MonitorSettings, PointFlag, StepControl, Stop,
};
use bifkit::hb::{floquet, hb_solve, hb_trace_branch, FourierState, HBSettings};
use bifkit::nlsolve::{deflated_newton_solve, newton_solve, Damping, DeflationSettings, NewtonSettings};
use bifkit::problem::{builtin, check_derivatives, norm, Parameters, Problem};
use bifkit::stability::{eigs_with, EigenPair, EigenSettings};
use num_complex::Complex64;

use crate::config::RunConfig;
use crate::output::{num, Run, Table};
use crate::snapshot::{Snapshot, SnapshotKind};
use crate::{is_usage, CliError, Command};

struct Context<'a> {
    cfg: &'a RunConfig,
    pb: Box<dyn Problem>,
    params: Parameters,
}

impl Context<'_> {
    fn name(&self) -> &str {
        self.pb.name()
    }

    fn newton(&self) -> NewtonSettings {
        let n = &self.cfg.newton;
        NewtonSettings {
            abs_tol: n.abs_tol,
            rel_tol: n.rel_tol,
            max_iterations: n.max_iterations,
            damping: match n.damping {
                crate::config::DampingChoice::None => Damping::None,
                crate::config::DampingChoice::Backtracking => Damping::backtracking(),
            },
            record_iterates: false,
        }
    }

    fn read(&self, path: &Path) -> Result<Snapshot, CliError> {
        let snap = Snapshot::read(path)?;
        snap.expect_problem(self.name(), self.pb.dim())?;
        Ok(snap)
    }

    /// Snapshot parameters with the configured active parameter.
    fn snapshot_params(&self, snap: &Snapshot) -> Result<Parameters, CliError> {
        let mut p = snap.params.clone();
        if p.names() != self.params.names() {
            return Err(CliError::Snapshot("snapshot parameters do not match the problem".into()));
        }
        if self.cfg.problem.active.is_some() {
            p.set_active(self.params.active_name())?;
        }
        Ok(p)
    }

    /// Starting state and parameters: the input snapshot if given, otherwise
    /// the problem's initial guess at the configured parameters.
    fn start(&self) -> Result<(Vec<f64>, Parameters, Option<Snapshot>), CliError> {
        match &self.cfg.input.state {
            Some(path) => {
                let snap = self.read(path)?;
                let mut p = self.snapshot_params(&snap)?;
                for (k, v) in &self.cfg.problem.parameters {
                    p.set(k, *v)?;
                }
                Ok((snap.state()?, p, Some(snap)))
            }
            None => Ok((self.pb.initial_guess(&self.params), self.params.clone(), None)),
        }
    }

    fn solve_steady(&self, run: &mut Run) -> Result<(Vec<f64>, Parameters), CliError> {
        let (q0, p, _) = self.start()?;
        let sol = newton_solve(self.pb.as_ref(), &q0, &p, &self.newton())?;
        run.log(format!("steady solve: {} iterations, residual {:e}", sol.iterations, sol.residual_history.last().unwrap()));
        Ok((sol.q, p))
    }
}

fn context(cfg: &RunConfig) -> Result<Context<'_>, CliError> {
    let pb = builtin(&cfg.problem.name, cfg.problem.grid_points)?;
    let mut params = pb.default_parameters();
    for (k, v) in &cfg.problem.parameters {
        params.set(k, *v)?;
    }
    if let Some(a) = &cfg.problem.active {
        params.set_active(a)?;
    }
    Ok(Context { cfg, pb, params })
}

/// Runs `command`, always leaving a log and provenance record in `out`.
pub fn execute(command: Command, cfg: &RunConfig, out: &Path) -> Result<String, CliError> {
    let ctx = context(cfg)?;
    let mut run = Run::new(out, command.name())?;
    let result = match command {
        Command::Steady => steady(&ctx, &mut run),
        Command::Trace => trace(&ctx, &mut run),
        Command::Eigs => eigs(&ctx, &mut run),
        Command::BifLocate => bif_locate(&ctx, &mut run),
        Command::BifTrace => bif_trace(&ctx, &mut run),
        Command::HbSolve => hb_solve_cmd(&ctx, &mut run),
        Command::HbTrace => hb_trace(&ctx, &mut run),
        Command::Floquet => floquet_cmd(&ctx, &mut run),
        Command::Check => check(&ctx, &mut run),
    };
    let result = match result {
        Err(CliError::Core(e)) if !is_usage(&e) => {
            let report = run.report(&e)?;
            run.log(format!("failed: {e}"));
            Err(CliError::Divergence { message: e.to_string(), report })
        }
        other => other,
    };
    match &result {
        Ok(_) => run.finish(cfg, "ok")?,
        Err(e) => {
            run.log(format!("error: {e}"));
            run.finish(cfg, "failed")?
        }
    }
    result
}

fn steady(ctx: &Context, run: &mut Run) -> Result<String, CliError> {
    let (q0, p, _) = ctx.start()?;
    let pb = ctx.pb.as_ref();
    let sol = if ctx.cfg.input.deflate.is_empty() {
        newton_solve(pb, &q0, &p, &ctx.newton())?
    } else {
        let known = ctx.cfg.input.deflate.iter().map(|f| ctx.read(f)?.state()).collect::<Result<Vec<_>, _>>()?;
        let settings =
            DeflationSettings { order_p: ctx.cfg.deflation.order_p, shift_a: ctx.cfg.deflation.shift_a, known_solutions: known };
        deflated_newton_solve(pb, &q0, &p, &ctx.newton(), &settings)?
    };
    let residual = norm(&pb.residual(&sol.q, &p));
    for (i, r) in sol.residual_history.iter().enumerate() {
        run.log(format!("iteration {i}: residual {r:e}"));
    }
    run.log(format!("residual norm {residual:e}"));
    run.snapshot("steady.snap", &Snapshot::steady(ctx.name(), &sol.q, &p, None))?;
    Ok(format!("steady state after {} iterations, residual norm {residual:e}", sol.iterations))
}

fn control_from(cfg: &crate::config::ContinuationConfig) -> StepControl {
    StepControl {
        h0: cfg.h0,
        h_min: cfg.h_min,
        h_max: cfg.h_max,
        corrector: NewtonSettings {
            abs_tol: cfg.corrector_tol,
            max_iterations: cfg.corrector_max_iterations,
            ..Default::default()
        },
        ..Default::default()
    }
}

/// Leading eigenvalue (largest real part) of a monitored spectrum.
fn leading(eigs: &[Complex64]) -> Option<Complex64> {
    eigs.iter().copied().max_by(|a, b| a.re.total_cmp(&b.re).then(a.im.abs().total_cmp(&b.im.abs())))
}

fn kind_label(k: CandidateKind) -> &'static str {
    match k {
        CandidateKind::Hopf => "hopf",
        CandidateKind::RealZero => "real_zero",
    }
}

const BRANCH_COLUMNS: [&str; 9] = ["index", "alpha", "norm_q", "max_q", "sigma", "omega", "step", "iterations", "flag"];

fn branch_row(index: usize, pt: &BranchPoint) -> Vec<String> {
    let lead = pt.eigenvalues.as_deref().and_then(leading);
    let flag = pt.flags.iter().map(|PointFlag::Crossing(k)| kind_label(*k)).collect::<Vec<_>>().join("|");
    let max_q = pt.q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    vec![
        index.to_string(),
        num(pt.alpha()),
        num(norm(&pt.q)),
        num(max_q),
        lead.map_or("nan".into(), |z| num(z.re)),
        lead.map_or("nan".into(), |z| num(z.im.abs())),
        num(pt.step_used),
        pt.corrector_iterations.to_string(),
        if flag.is_empty() { "none".into() } else { flag },
    ]
}

fn trace(ctx: &Context, run: &mut Run) -> Result<String, CliError> {
    let cc = &ctx.cfg.continuation;
    let mut control = control_from(cc);
    let pb = ctx.pb.as_ref();
    let (q0, p, snap) = ctx.start()?;
    let mut table = Table::new(&BRANCH_COLUMNS);
    let mut offset = 0;
    let start = match (&ctx.cfg.input.branch, snap.as_ref().and_then(Snapshot::tangent)) {
        (Some(csv), Some(tangent)) => {
            let previous = Table::read(csv)?;
            if previous.rows().first().map(Vec::len) != Some(BRANCH_COLUMNS.len()) {
                return Err(CliError::Usage(format!("{} is not a branch table", csv.display())));
            }
            let last = previous.rows().last().expect("checked non-empty");
            let step: f64 = last[6].parse().map_err(|_| CliError::Usage("unreadable step column".into()))?;
            if step != 0.0 {
                control.h0 = step.abs().clamp(control.h_min, control.h_max).copysign(control.h0);
            }
            offset = previous.len() - 1;
            previous.rows()[..offset].iter().for_each(|r| table.push(r.clone()));
            run.log(format!("resuming {} after {} points", csv.display(), offset + 1));
            let snap = snap.as_ref().expect("tangent comes from the snapshot");
            BranchPoint {
                q: q0,
                params: ctx.snapshot_params(snap)?,
                tangent: tangent.normalized(),
                step_used: step,
                corrector_iterations: 0,
                eigenvalues: None,
                flags: vec![],
            }
        }
        (Some(_), None) => return Err(CliError::Usage("resuming needs a steady snapshot carrying a tangent".into())),
        _ => start_point(pb, &q0, &p, &ctx.newton())?,
    };
    let stop = Stop {
        param_min: cc.param_min.unwrap_or(f64::NEG_INFINITY),
        param_max: cc.param_max.unwrap_or(f64::INFINITY),
        max_points: cc.max_points,
    };
    let monitor = MonitorSettings { enabled: cc.monitor, nev: cc.nev, shift: Complex64::new(cc.shift_re, cc.shift_im), refine: cc.refine };
    let branch = trace_branch(pb, &start, &control, &stop, &monitor)?;
    for (i, pt) in branch.points.iter().enumerate() {
        table.push(branch_row(offset + i, pt));
    }
    run.table("branch.csv", &table)?;
    let last = branch.points.last().expect("branch is non-empty");
    run.snapshot("branch_last.snap", &Snapshot::steady(ctx.name(), &last.q, &last.params, Some(&last.tangent)))?;

    let mut cands = Table::new(&["index", "alpha", "sigma", "omega", "bracket_start", "bracket_end", "refined", "kind"]);
    for (i, c) in branch.candidates.iter().enumerate() {
        let lam = c.eigenpair.lambda;
        cands.push(vec![
            i.to_string(),
            num(c.params.active_value()),
            num(lam.re),
            num(lam.im.abs()),
            (offset + c.bracket.0).to_string(),
            (offset + c.bracket.1).to_string(),
            c.refined.to_string(),
            kind_label(c.kind).into(),
        ]);
        run.snapshot(&format!("candidate_{i}.snap"), &Snapshot::steady(ctx.name(), &c.q, &c.params, None))?;
        let lam = Complex64::new(lam.re, lam.im.abs());
        run.snapshot(
            &format!("candidate_{i}_mode.snap"),
            &Snapshot::mode(ctx.name(), pb.dim(), &c.params, lam, &[c.eigenpair.direct_mode.clone()]),
        )?;
    }
    run.table("candidates.csv", &cands)?;
    run.log(format!("status: {:?}", branch.status));
    Ok(format!(
        "{} points, {} candidates, final {} = {}",
        branch.points.len(),
        branch.candidates.len(),
        branch.parameter,
        last.alpha()
    ))
}

/// Eigenpairs near `shift`, nudging a shift that sits exactly on an eigenvalue.
fn eigs_near(pb: &dyn Problem, q: &[f64], p: &Parameters, shift: Complex64, nev: usize, adjoint: bool) -> Result<Vec<EigenPair>, CliError> {
    let mut s = shift;
    for attempt in 0..4 {
        let settings = EigenSettings { shift: s, nev: nev.min(pb.dim()), want_adjoint: adjoint, ..Default::default() };
        match eigs_with(pb, q, p, &settings) {
            Err(bifkit::Error::SingularShift) => s += Complex64::new(1e-7 * 10f64.powi(attempt), 0.0),
            r => return Ok(r?),
        }
    }
    Err(bifkit::Error::SingularShift.into())
}

fn eigs(ctx: &Context, run: &mut Run) -> Result<String, CliError> {
    let (q, p) = ctx.solve_steady(run)?;
    let ec = &ctx.cfg.eigs;
    let pairs = eigs_near(ctx.pb.as_ref(), &q, &p, Complex64::new(ec.shift_re, ec.shift_im), ec.nev, ec.adjoint)?;
    let mut table = Table::new(&["index", "alpha", "sigma", "omega", "residual_norm"]);
    for (i, e) in pairs.iter().enumerate() {
        table.push(vec![i.to_string(), num(p.active_value()), num(e.lambda.re), num(e.lambda.im), num(e.residual_norm)]);
        let mut blocks = vec![e.direct_mode.clone()];
        blocks.extend(e.adjoint_mode.clone());
        run.snapshot(&format!("mode_{i}.snap"), &Snapshot::mode(ctx.name(), q.len(), &p, e.lambda, &blocks))?;
    }
    run.table("spectrum.csv", &table)?;
    run.snapshot("eigs_state.snap", &Snapshot::steady(ctx.name(), &q, &p, None))?;
    let lead = leading(&pairs.iter().map(|e| e.lambda).collect::<Vec<_>>());
    Ok(format!("{} eigenvalues, leading {}", pairs.len(), lead.map_or("none".into(), |z| z.to_string())))
}

const BIF_COLUMNS: [&str; 13] = [
    "index", "alpha", "alpha2", "norm_q", "omega", "period", "drift_re", "drift_im", "beta_re", "beta_im", "kind", "onset",
    "event",
];

fn bif_row(index: usize, bif: &BifPoint, second: Option<usize>, event: &str) -> Vec<String> {
    let period = if bif.kind == BifKind::Hopf { 2.0 * PI / bif.omega } else { f64::INFINITY };
    let nf = bif.normal_form.as_ref();
    let drift = nf.map(|n| n.eigen_drift[bif.params.active_index()]);
    let nan = || "nan".to_string();
    vec![
        index.to_string(),
        num(bif.alpha()),
        second.map_or_else(nan, |j| num(bif.params.value(j))),
        num(norm(&bif.q)),
        num(bif.omega),
        num(period),
        drift.map_or_else(nan, |d| num(d.re)),
        drift.map_or_else(nan, |d| num(d.im)),
        nf.map_or_else(nan, |n| num(n.beta.re)),
        nf.map_or_else(nan, |n| num(n.beta.im)),
        bif.kind.as_str().into(),
        nf.map_or("unknown", |n| n.onset.as_str()).into(),
        event.into(),
    ]
}

fn locator(ctx: &Context) -> LocatorSettings {
    let bc = &ctx.cfg.bifurcation;
    LocatorSettings { tol: bc.tol, max_iterations: bc.max_iterations, ..Default::default() }
}

fn bif_locate(ctx: &Context, run: &mut Run) -> Result<String, CliError> {
    let pb = ctx.pb.as_ref();
    let (q, p) = match &ctx.cfg.input.state {
        Some(_) => {
            let (q, p, _) = ctx.start()?;
            (q, p)
        }
        None => ctx.solve_steady(run)?,
    };
    let omega = match (&ctx.cfg.input.mode, ctx.cfg.bifurcation.omega) {
        (_, Some(w)) => w,
        (Some(path), None) => {
            let m = ctx.read(path)?;
            m.expect_kind(SnapshotKind::Mode)?;
            m.meta[1].abs()
        }
        (None, None) => return Err(CliError::Usage("bif-locate needs bifurcation.omega or an input mode".into())),
    };
    let hopf = omega > 0.0;
    let e = eigs_near(pb, &q, &p, Complex64::new(0.0, omega), 1, true)?.remove(0);
    run.log(format!("seed eigenvalue {}", e.lambda));
    let kind = if hopf { LocateKind::Hopf } else { LocateKind::Zero };
    let adjoint = e.adjoint_mode.clone().expect("adjoint requested");
    let bif = locate_bifurcation(pb, kind, &q, &p, e.lambda.im.abs(), (&e.direct_mode, &adjoint), &locator(ctx))?;
    let mut table = Table::new(&BIF_COLUMNS);
    table.push(bif_row(0, &bif, None, "none"));
    run.table("bifpoint.csv", &table)?;
    run.snapshot("bifpoint.snap", &Snapshot::bifpoint(ctx.name(), &bif))?;
    Ok(format!("{} at {} = {}, omega = {}", bif.kind.as_str(), bif.params.active_name(), bif.alpha(), bif.omega))
}

/// Bifurcation point from the input snapshot with its normal form.
fn input_bifpoint(ctx: &Context) -> Result<BifPoint, CliError> {
    let path = ctx.cfg.input.bifpoint.as_ref().ok_or_else(|| CliError::Usage("input.bifpoint is required".into()))?;
    let snap = ctx.read(path)?;
    let mut bif = snap.bif_point()?;
    bif.params = ctx.snapshot_params(&snap)?;
    bif.normal_form = normal_form(ctx.pb.as_ref(), &bif).ok();
    Ok(bif)
}

fn bif_trace(ctx: &Context, run: &mut Run) -> Result<String, CliError> {
    let bc = &ctx.cfg.bifurcation;
    let second = bc.second_parameter.as_deref().ok_or_else(|| CliError::Usage("bifurcation.second_parameter is required".into()))?;
    let bif = input_bifpoint(ctx)?;
    let j = bif.params.index_of(second)?;
    let control = StepControl { h0: bc.h0, h_min: bc.h_min, h_max: bc.h_max, ..Default::default() };
    let settings = CurveSettings {
        stop: Stop {
            param_min: bc.second_min.unwrap_or(f64::NEG_INFINITY),
            param_max: bc.second_max.unwrap_or(f64::INFINITY),
            max_points: bc.max_points,
        },
        bidirectional: bc.bidirectional,
        monitor_nev: bc.monitor_nev,
        ..Default::default()
    };
    let curve = trace_bifurcation_curve(ctx.pb.as_ref(), &bif, second, &control, &settings)?;
    let mut table = Table::new(&BIF_COLUMNS);
    for (i, pt) in curve.points.iter().enumerate() {
        let events: Vec<&str> = curve.codim2_events.iter().filter(|e| e.index == i).map(|e| e.kind.as_str()).collect();
        let event = if events.is_empty() { "none".to_string() } else { events.join("|") };
        table.push(bif_row(i, pt, Some(j), &event));
    }
    run.table("bifcurve.csv", &table)?;
    let first = curve.points.first().expect("curve is non-empty");
    let last = curve.points.last().expect("curve is non-empty");
    run.snapshot("bifcurve_first.snap", &Snapshot::bifpoint(ctx.name(), first))?;
    run.snapshot("bifcurve_last.snap", &Snapshot::bifpoint(ctx.name(), last))?;
    run.log(format!("status: {:?}", curve.status));
    Ok(format!("{} curve points, {} codim-2 events", curve.points.len(), curve.codim2_events.len()))
}

fn hb_settings(ctx: &Context) -> HBSettings {
    HBSettings { order: ctx.cfg.hb.order, newton: ctx.newton(), phase_reference: None }
}

fn hb_columns(order: usize) -> Vec<String> {
    let mut c: Vec<String> = ["index", "alpha", "omega", "period", "norm_mean"].iter().map(|s| s.to_string()).collect();
    c.extend((1..=order).map(|k| format!("norm_{k}")));
    c.extend(["step", "iterations"].iter().map(|s| s.to_string()));
    c
}

fn hb_row(index: usize, fs: &FourierState, alpha: f64, step: f64, iterations: usize) -> Vec<String> {
    let mut r = vec![index.to_string(), num(alpha), num(fs.omega), num(fs.period()), num(norm(&fs.mean))];
    r.extend(fs.harmonic_norms().into_iter().map(num));
    r.push(num(step));
    r.push(iterations.to_string());
    r
}

/// Periodic orbit and parameters from the input Fourier snapshot.
fn input_fourier(ctx: &Context) -> Result<(FourierState, Parameters), CliError> {
    let path = ctx.cfg.input.fourier.as_ref().ok_or_else(|| CliError::Usage("input.fourier is required".into()))?;
    let snap = ctx.read(path)?;
    let fs = snap.fourier_state()?;
    Ok((fs, ctx.snapshot_params(&snap)?))
}

fn hb_solve_cmd(ctx: &Context, run: &mut Run) -> Result<String, CliError> {
    let hc = &ctx.cfg.hb;
    let (guess, p) = match (&ctx.cfg.input.fourier, &ctx.cfg.input.bifpoint) {
        (Some(_), _) => {
            let (fs, mut p) = input_fourier(ctx)?;
            if let Some(a) = hc.alpha {
                p.set_active_value(a);
            }
            (fs, p)
        }
        (None, Some(_)) => {
            let bif = input_bifpoint(ctx)?;
            let target = hc.alpha.unwrap_or(bif.alpha() + hc.delta);
            let mut delta = vec![0.0; bif.params.len()];
            delta[bif.params.active_index()] = target - bif.alpha();
            let pred = weakly_nonlinear_predict(&bif, &delta)?;
            run.log(format!("predicted amplitude {:e}, omega {}", pred.amplitude, pred.omega));
            let mut p = bif.params.clone();
            p.set_active_value(target);
            (FourierState::from_prediction(&pred, hc.order), p)
        }
        (None, None) => return Err(CliError::Usage("hb-solve needs input.fourier or input.bifpoint".into())),
    };
    let fs = hb_solve(ctx.pb.as_ref(), &guess, &p, &hb_settings(ctx))?;
    let mut table = Table::new(&hb_columns(fs.order()));
    table.push(hb_row(0, &fs, p.active_value(), 0.0, 0));
    run.table("hb_solution.csv", &table)?;
    run.snapshot("fourier.snap", &Snapshot::fourier(ctx.name(), &fs, &p))?;
    Ok(format!("periodic orbit at {} = {}: omega {}, period {}", p.active_name(), p.active_value(), fs.omega, fs.period()))
}

fn hb_trace(ctx: &Context, run: &mut Run) -> Result<String, CliError> {
    let hc = &ctx.cfg.hb;
    let (fs, p) = input_fourier(ctx)?;
    let control = StepControl { h0: hc.h0, h_min: hc.h_min, h_max: hc.h_max, ..Default::default() };
    let stop = Stop {
        param_min: hc.param_min.unwrap_or(f64::NEG_INFINITY),
        param_max: hc.param_max.unwrap_or(f64::INFINITY),
        max_points: hc.max_points,
    };
    let branch = hb_trace_branch(ctx.pb.as_ref(), &fs, &p, &control, &stop, &hb_settings(ctx))?;
    let mut table = Table::new(&hb_columns(hc.order));
    for (i, pt) in branch.points.iter().enumerate() {
        table.push(hb_row(i, &pt.state, pt.alpha(), pt.step_used, pt.corrector_iterations));
        run.snapshot(&format!("hb_point_{i:04}.snap"), &Snapshot::fourier(ctx.name(), &pt.state, &pt.params))?;
    }
    run.table("hb_branch.csv", &table)?;
    run.log(format!("status: {:?}", branch.status));
    let last = branch.points.last().expect("branch is non-empty");
    Ok(format!("{} orbits, final {} = {}, period {}", branch.points.len(), branch.parameter, last.alpha(), last.period()))
}

fn floquet_cmd(ctx: &Context, run: &mut Run) -> Result<String, CliError> {
    let fc = &ctx.cfg.floquet;
    let (fs, p) = input_fourier(ctx)?;
    let pairs = floquet(ctx.pb.as_ref(), &fs, &p, Complex64::new(fc.shift_re, fc.shift_im), fc.nev)?;
    let mut table = Table::new(&["index", "alpha", "sigma", "omega", "principal", "phase_mode"]);
    for (i, e) in pairs.iter().enumerate() {
        table.push(vec![
            i.to_string(),
            num(p.active_value()),
            num(e.exponent.re),
            num(e.exponent.im),
            e.principal.to_string(),
            e.phase_mode.to_string(),
        ]);
        run.snapshot(&format!("floquet_mode_{i}.snap"), &Snapshot::mode(ctx.name(), fs.dim(), &p, e.exponent, &e.mode))?;
    }
    run.table("floquet.csv", &table)?;
    let unstable = pairs.iter().filter(|e| e.principal && !e.phase_mode && e.exponent.re > 0.0).count();
    Ok(format!("{} exponents, {} unstable principal", pairs.len(), unstable))
}

fn check(ctx: &Context, run: &mut Run) -> Result<String, CliError> {
    let (q, p, _) = ctx.start()?;
    let report = check_derivatives(ctx.pb.as_ref(), &q, &p)?;
    let mut table = Table::new(&["callback", "relative_error"]);
    for (name, err) in report.entries() {
        run.log(format!("{name}: {err:e}"));
        table.push(vec![name, num(err)]);
    }
    run.table("check.csv", &table)?;
    Ok(format!("maximum relative derivative error {:e}", report.max_error()))
}
