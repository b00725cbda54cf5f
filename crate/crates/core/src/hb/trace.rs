use nalgebra::DMatrix;

use super::{full_jacobian, full_residual, hb_param_gradient, hb_solve, FourierState, HBSettings};
use crate::continuation::{adapt_step, BranchStatus, StepControl, Stop};
use crate::error::{Error, Result};
use crate::linalg::{factor, BorderedSystem, Factorization};
use crate::problem::{dot, norm, Parameters, Problem};

#[derive(Debug, Clone, PartialEq)]
pub struct HbPoint {
    pub state: FourierState,
    pub params: Parameters,
    /// Unit tangent over `[packed state, alpha]`.
    pub tangent: Vec<f64>,
    pub step_used: f64,
    pub corrector_iterations: usize,
}

impl HbPoint {
    pub fn alpha(&self) -> f64 {
        self.params.active_value()
    }

    pub fn period(&self) -> f64 {
        self.state.period()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HbBranch {
    pub points: Vec<HbPoint>,
    pub parameter: String,
    pub status: BranchStatus,
}

fn with_alpha(p: &Parameters, a: f64) -> Parameters {
    let mut p = p.clone();
    p.set_active_value(a);
    p
}

/// Factorization of `[G, dF/dalpha; row^T, corner]` at `(fs, p)`.
fn extended(
    pb: &dyn Problem,
    fs: &FourierState,
    reference: &FourierState,
    p: &Parameters,
    row: &[f64],
) -> Result<Factorization> {
    let g = full_jacobian(pb, fs, reference, p)?;
    let mut col = hb_param_gradient(pb, fs, p, p.active_index());
    col.push(0.0);
    let m = row.len() - 1;
    let sys = BorderedSystem::new(g, vec![col], vec![row[..m].to_vec()], DMatrix::from_element(1, 1, row[m]))?;
    factor(&sys.assemble())
}

fn unit_last(len: usize) -> Vec<f64> {
    let mut e = vec![0.0; len];
    e[len - 1] = 1.0;
    e
}

fn normalized(v: Vec<f64>) -> Vec<f64> {
    let s = norm(&v);
    v.into_iter().map(|x| x / s).collect()
}

struct Corrected {
    y: Vec<f64>,
    tangent: Vec<f64>,
    iterations: usize,
}

fn correct(
    pb: &dyn Problem,
    y0: &[f64],
    tangent: &[f64],
    reference: &FourierState,
    p: &Parameters,
    control: &StepControl,
) -> Result<Corrected> {
    let (n, order) = (reference.dim(), reference.order());
    let len = y0.len();
    let mut y = y0.to_vec();
    let mut t = tangent.to_vec();
    let fail = |h: &[f64]| Error::CorrectorFailure { trace: h.to_vec() };
    let mut history = Vec::new();
    for it in 0..=control.corrector.max_iterations {
        let fs = FourierState::unpack(&y[..len - 1], n, order)?;
        let pp = with_alpha(p, y[len - 1]);
        let mut r = full_residual(pb, &fs, reference, &pp).map_err(|_| fail(&history))?;
        let rn = norm(&r);
        history.push(rn);
        if !rn.is_finite() || fs.omega <= 0.0 {
            return Err(fail(&history));
        }
        let f = extended(pb, &fs, reference, &pp, &t).map_err(|_| fail(&history))?;
        let fresh = normalized(f.solve(&unit_last(len), false)?);
        let fresh = if dot(&fresh, &t) < 0.0 { fresh.into_iter().map(|v| -v).collect() } else { fresh };
        if rn <= control.corrector.abs_tol {
            return Ok(Corrected { y, tangent: fresh, iterations: it });
        }
        if it == control.corrector.max_iterations {
            break;
        }
        r.push(0.0);
        let d = f.solve(&r, false)?;
        y.iter_mut().zip(&d).for_each(|(a, b)| *a -= b);
        t = fresh;
    }
    Err(fail(&history))
}

/// Pseudo-arclength continuation of a converged periodic orbit in the
/// active parameter; positive steps initially increase the parameter.
pub fn hb_trace_branch(
    pb: &dyn Problem,
    start: &FourierState,
    p: &Parameters,
    control: &StepControl,
    stop: &Stop,
    settings: &HBSettings,
) -> Result<HbBranch> {
    control.validate()?;
    let first = hb_solve(pb, start, p, &HBSettings { phase_reference: Some(start.clone()), ..settings.clone() })?;
    let x = first.pack();
    let len = x.len() + 1;
    let f = extended(pb, &first, &first, p, &unit_last(len))?;
    let mut tangent = normalized(f.solve(&unit_last(len), false)?);
    if tangent[len - 1] < 0.0 {
        tangent.iter_mut().for_each(|v| *v = -*v);
    }
    let mut points = vec![HbPoint {
        state: first,
        params: p.clone(),
        tangent,
        step_used: 0.0,
        corrector_iterations: 0,
    }];
    let mut h = control.h0;
    let status = loop {
        if points.len() >= stop.max_points {
            break BranchStatus::MaxPoints;
        }
        let last = points.last().expect("branch has a start point");
        let mut y = last.state.pack();
        y.push(last.alpha());
        let pred: Vec<f64> = y.iter().zip(&last.tangent).map(|(a, t)| a + h * t).collect();
        match correct(pb, &pred, &last.tangent, &last.state, &last.params, control) {
            Ok(c) => {
                let dist = norm(&c.y.iter().zip(&y).map(|(a, b)| a - b).collect::<Vec<_>>());
                if dist <= 1.5 * control.h_max {
                    let alpha = c.y[len - 1];
                    if alpha < stop.param_min || alpha > stop.param_max {
                        break BranchStatus::ParameterBound;
                    }
                    let state = FourierState::unpack(&c.y[..len - 1], last.state.dim(), last.state.order())?;
                    points.push(HbPoint {
                        state,
                        params: with_alpha(&last.params, alpha),
                        tangent: c.tangent,
                        step_used: h,
                        corrector_iterations: c.iterations,
                    });
                    h = adapt_step(h, c.iterations, control);
                    continue;
                }
                h /= 2.0;
            }
            Err(_) => h /= 2.0,
        }
        if h.abs() < control.h_min {
            break BranchStatus::StepTooSmall(format!("corrector failed at step {:e}", h.abs()));
        }
    };
    Ok(HbBranch { points, parameter: p.active_name().to_string(), status })
}
