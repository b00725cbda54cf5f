//! Harmonic balance for periodic orbits of cubic systems, with Floquet
//! analysis by Hill's method.
//!
//! A periodic state is `q(t) = q0 + sum_{n=1..N} (c_n e^{i n w t} + c.c.)`.
//! Residual harmonics are exact Fourier coefficients of `M q' + R(q)` for
//! polynomial `R` of degree at most three, computed by convolving the
//! harmonics through the Taylor expansion about the mean.

mod floquet;
mod trace;

pub use floquet::{floquet, mode_harmonics, FloquetPair};
pub use trace::{hb_trace_branch, HbBranch, HbPoint};

use num_complex::Complex64;

use crate::bifurcation::WeaklyNonlinear;
use crate::error::{DivergenceReport, Error, Result};
use crate::linalg::{factor, ComplexSparse, SparseMatrix, TripletBuilder};
use crate::nlsolve::{Damping, NewtonSettings};
use crate::problem::{
    cnorm, hessian_apply_c, hessian_matrix_c, mass_jacobian_apply_c, mass_second_apply_c, norm, third_apply_c,
    third_matrix_c, to_complex, Parameters, Problem,
};

type C = Complex64;

const ZERO: C = C::new(0.0, 0.0);

#[derive(Debug, Clone, PartialEq)]
pub struct FourierState {
    pub mean: Vec<f64>,
    /// `harmonics[n - 1]` is `c_n`.
    pub harmonics: Vec<Vec<C>>,
    pub omega: f64,
}

impl FourierState {
    pub fn new(mean: Vec<f64>, harmonics: Vec<Vec<C>>, omega: f64) -> Result<Self> {
        let fs = Self { mean, harmonics, omega };
        fs.validate()?;
        Ok(fs)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.omega > 0.0) || !self.omega.is_finite() {
            return Err(Error::InvalidConfiguration(format!("omega must be positive, got {}", self.omega)));
        }
        if self.harmonics.is_empty() {
            return Err(Error::InvalidConfiguration("harmonic order must be at least 1".into()));
        }
        let n = self.mean.len();
        for h in &self.harmonics {
            if h.len() != n {
                return Err(Error::DimensionMismatch { expected: n, found: h.len() });
            }
        }
        Ok(())
    }

    /// Equilibrium `q` with `order` zero harmonics.
    pub fn steady(q: &[f64], order: usize, omega: f64) -> Self {
        Self { mean: q.to_vec(), harmonics: vec![vec![ZERO; q.len()]; order], omega }
    }

    /// Seed from a weakly nonlinear Hopf prediction.
    pub fn from_prediction(pred: &WeaklyNonlinear, order: usize) -> Self {
        let mut fs = Self::steady(&pred.q_mean, order.max(1), pred.omega);
        fs.harmonics[0] = pred.first_harmonic.clone();
        fs
    }

    pub fn order(&self) -> usize {
        self.harmonics.len()
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn period(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.omega
    }

    /// 2-norms of `c_1 .. c_N`.
    pub fn harmonic_norms(&self) -> Vec<f64> {
        self.harmonics.iter().map(|h| cnorm(h)).collect()
    }

    /// Truncates or zero-pads to `order` harmonics.
    pub fn with_order(&self, order: usize) -> Self {
        let mut fs = self.clone();
        fs.harmonics.resize(order, vec![ZERO; self.dim()]);
        fs
    }

    /// Shifts time by `theta / omega`, multiplying `c_n` by `e^{i n theta}`.
    pub fn rotated(&self, theta: f64) -> Self {
        let mut fs = self.clone();
        for (k, h) in fs.harmonics.iter_mut().enumerate() {
            let r = C::from_polar(1.0, (k + 1) as f64 * theta);
            h.iter_mut().for_each(|z| *z *= r);
        }
        fs
    }

    /// Coefficient of `e^{i m w t}` for `|m| <= N`.
    fn coeff(&self, m: i64) -> Vec<C> {
        match m {
            0 => to_complex(&self.mean, None),
            m if m > 0 => self.harmonics[m as usize - 1].clone(),
            m => self.harmonics[(-m) as usize - 1].iter().map(|z| z.conj()).collect(),
        }
    }

    /// Packed real unknowns `[q0, Re c1, Im c1, ..., Re cN, Im cN, omega]`.
    pub fn pack(&self) -> Vec<f64> {
        let mut x = self.mean.clone();
        for h in &self.harmonics {
            x.extend(h.iter().map(|z| z.re));
            x.extend(h.iter().map(|z| z.im));
        }
        x.push(self.omega);
        x
    }

    pub fn unpack(x: &[f64], dim: usize, order: usize) -> Result<Self> {
        let expected = (2 * order + 1) * dim + 1;
        if x.len() != expected {
            return Err(Error::DimensionMismatch { expected, found: x.len() });
        }
        let harmonics = (0..order)
            .map(|k| {
                let base = dim * (1 + 2 * k);
                to_complex(&x[base..base + dim], Some(&x[base + dim..base + 2 * dim]))
            })
            .collect();
        Ok(Self { mean: x[..dim].to_vec(), harmonics, omega: x[expected - 1] })
    }
}

/// `q(t)` for a Fourier state.
pub fn sample_time(fs: &FourierState, t: f64) -> Vec<f64> {
    let mut q = fs.mean.clone();
    for (k, h) in fs.harmonics.iter().enumerate() {
        let e = C::from_polar(1.0, (k + 1) as f64 * fs.omega * t);
        for (qi, z) in q.iter_mut().zip(h) {
            *qi += 2.0 * (z * e).re;
        }
    }
    q
}

/// Harmonic residuals: a real mean part and complex `F_1 .. F_N`.
#[derive(Debug, Clone, PartialEq)]
pub struct HbResidual {
    pub mean: Vec<f64>,
    pub harmonics: Vec<Vec<C>>,
}

impl HbResidual {
    pub fn norm(&self) -> f64 {
        let mut s = norm(&self.mean).powi(2);
        for h in &self.harmonics {
            s += cnorm(h).powi(2);
        }
        s.sqrt()
    }

    fn packed(&self) -> Vec<f64> {
        let mut x = self.mean.clone();
        for h in &self.harmonics {
            x.extend(h.iter().map(|z| z.re));
            x.extend(h.iter().map(|z| z.im));
        }
        x
    }
}

fn check_capable(pb: &dyn Problem, fs: &FourierState) -> Result<()> {
    match pb.polynomial_degree() {
        Some(d) if d <= 3 => {}
        _ => {
            return Err(Error::Unsupported(format!(
                "harmonic balance needs a residual of polynomial degree <= 3 ({})",
                pb.name()
            )))
        }
    }
    if fs.dim() != pb.dim() {
        return Err(Error::DimensionMismatch { expected: pb.dim(), found: fs.dim() });
    }
    if fs.harmonics.is_empty() || fs.harmonics.iter().any(|h| h.len() != fs.dim()) {
        return Err(Error::InvalidConfiguration("malformed harmonics".into()));
    }
    if fs.omega == 0.0 || !fs.omega.is_finite() {
        return Err(Error::InvalidConfiguration(format!("invalid frequency {}", fs.omega)));
    }
    Ok(())
}

fn add(acc: &mut [C], v: &[C], s: C) {
    acc.iter_mut().zip(v).for_each(|(a, b)| *a += s * b);
}

/// Nonzero indices `j` in `-N..=N`.
fn tones(order: i64) -> impl Iterator<Item = i64> {
    (-order..=order).filter(|j| *j != 0)
}

/// Fourier coefficients `F_0 .. F_N` of `M(q) q' + R(q)`.
pub fn hb_residual(pb: &dyn Problem, fs: &FourierState, p: &Parameters) -> Result<HbResidual> {
    check_capable(pb, fs)?;
    let big_n = fs.order() as i64;
    let q0 = &fs.mean;
    let n = fs.dim();
    let coeffs: Vec<Vec<C>> = (-big_n..=big_n).map(|m| fs.coeff(m)).collect();
    let c = |m: i64| &coeffs[(m + big_n) as usize];
    let in_range = |m: i64| m != 0 && m.abs() <= big_n;
    let jac = ComplexSparse::real(pb.jacobian(q0, p));
    let mass = ComplexSparse::real(pb.mass_matrix(q0, p));
    let w = fs.omega;
    let varying_mass = !pb.mass_is_state_independent();

    let mut out = Vec::with_capacity(fs.order() + 1);
    for k in 0..=big_n {
        let mut f = vec![ZERO; n];
        if k == 0 {
            f = to_complex(&pb.residual(q0, p), None);
        } else {
            add(&mut f, &jac.matvec(c(k)), C::new(1.0, 0.0));
            add(&mut f, &mass.matvec(c(k)), C::new(0.0, k as f64 * w));
        }
        for j in tones(big_n) {
            let l = k - j;
            if in_range(l) {
                add(&mut f, &hessian_apply_c(pb, q0, p, c(j), c(l)), C::new(0.5, 0.0));
                if varying_mass {
                    let v = mass_jacobian_apply_c(pb, q0, p, c(j), c(l));
                    add(&mut f, &v, C::new(0.0, l as f64 * w));
                }
            }
            for i in tones(big_n) {
                let m = l - i;
                if !in_range(m) {
                    continue;
                }
                add(&mut f, &third_apply_c(pb, q0, p, c(j), c(i), c(m)), C::new(1.0 / 6.0, 0.0));
                if varying_mass {
                    let v = mass_second_apply_c(pb, q0, p, c(j), c(i), c(m));
                    add(&mut f, &v, C::new(0.0, 0.5 * m as f64 * w));
                }
            }
        }
        out.push(f);
    }
    let mean = out.remove(0).into_iter().map(|z| z.re).collect();
    Ok(HbResidual { mean, harmonics: out })
}

/// `sum_n Re <c_n, i n M c_n^ref>` and its gradient with respect to the
/// packed unknowns (zero in the mean and frequency slots).
pub fn phase_constraint(pb: &dyn Problem, fs: &FourierState, reference: &FourierState, p: &Parameters) -> Result<(f64, Vec<f64>)> {
    if reference.harmonics.iter().all(|h| h.iter().all(|z| *z == ZERO)) {
        return Err(Error::DegeneratePhase);
    }
    if reference.order() != fs.order() || reference.dim() != fs.dim() {
        return Err(Error::DimensionMismatch { expected: reference.pack().len(), found: fs.pack().len() });
    }
    let n = fs.dim();
    let mass = ComplexSparse::real(pb.mass_matrix(&reference.mean, p));
    let mut row = vec![0.0; n];
    let mut value = 0.0;
    for (k, (h, r)) in fs.harmonics.iter().zip(&reference.harmonics).enumerate() {
        let d: Vec<C> = mass.matvec(r).into_iter().map(|z| z * C::new(0.0, (k + 1) as f64)).collect();
        value += h.iter().zip(&d).map(|(a, b)| (a.conj() * b).re).sum::<f64>();
        row.extend(d.iter().map(|z| z.re));
        row.extend(d.iter().map(|z| z.im));
    }
    row.push(0.0);
    Ok((value, row))
}

/// Fourier coefficients `J_k`, `|k| <= 2N`, of the jacobian along the orbit.
pub(crate) fn jacobian_harmonics(pb: &dyn Problem, fs: &FourierState, p: &Parameters) -> Result<Vec<ComplexSparse>> {
    check_capable(pb, fs)?;
    if !pb.mass_is_state_independent() {
        return Err(Error::Unsupported("harmonic balance jacobians require a state-independent mass".into()));
    }
    let big_n = fs.order() as i64;
    let q0 = &fs.mean;
    let coeffs: Vec<Vec<C>> = (-big_n..=big_n).map(|m| fs.coeff(m)).collect();
    let c = |m: i64| &coeffs[(m + big_n) as usize];
    let j0 = ComplexSparse::real(pb.jacobian(q0, p));
    let zero = ComplexSparse::real(SparseMatrix::zeros(fs.dim(), fs.dim()));
    let degree = pb.polynomial_degree().unwrap_or(3);
    let mut out = Vec::with_capacity((4 * big_n + 1) as usize);
    for k in -2 * big_n..=2 * big_n {
        let mut a = if k == 0 { j0.clone() } else { zero.clone() };
        if k != 0 && k.abs() <= big_n && degree >= 2 {
            a = a.add_scaled(&hessian_matrix_c(pb, q0, p, c(k)), C::new(1.0, 0.0));
        }
        if degree >= 3 {
            for j in tones(big_n) {
                let l = k - j;
                if l != 0 && l.abs() <= big_n {
                    a = a.add_scaled(&third_matrix_c(pb, q0, p, c(j), c(l)), C::new(0.5, 0.0));
                }
            }
        }
        out.push(a);
    }
    Ok(out)
}

fn push_complex(t: &mut TripletBuilder, row: usize, col: usize, z: &ComplexSparse, s: C, re_row: bool) {
    // rows of Re(s z) or Im(s z) applied to a real vector
    let (a, b) = if re_row { (s.re, -s.im) } else { (s.im, s.re) };
    if a != 0.0 {
        t.add_block(row, col, &z.re, a);
    }
    if let Some(im) = &z.im {
        if b != 0.0 {
            t.add_block(row, col, im, b);
        }
    }
}

/// Real jacobian of the packed harmonic residual with respect to
/// `[q0, Re c_m, Im c_m]`, with the frequency column appended.
pub(crate) fn hb_jacobian(pb: &dyn Problem, fs: &FourierState, p: &Parameters) -> Result<(SparseMatrix, Vec<f64>)> {
    let jh = jacobian_harmonics(pb, fs, p)?;
    let big_n = fs.order() as i64;
    let n = fs.dim();
    let mass = ComplexSparse::real(pb.mass_matrix(&fs.mean, p));
    let size = (2 * big_n as usize + 1) * n;
    let block = |k: i64| &jh[(k + 2 * big_n) as usize];
    let one = C::new(1.0, 0.0);
    let mut t = TripletBuilder::new(size, size);
    let rows = |k: i64| if k == 0 { vec![(0, true)] } else { vec![(n * (2 * k as usize - 1), true), (n * (2 * k as usize), false)] };
    for k in 0..=big_n {
        for (row, re_row) in rows(k) {
            push_complex(&mut t, row, 0, block(k), one, re_row);
            for m in 1..=big_n {
                let (cr, ci) = (n * (2 * m as usize - 1), n * (2 * m as usize));
                push_complex(&mut t, row, cr, block(k - m), one, re_row);
                push_complex(&mut t, row, cr, block(k + m), one, re_row);
                push_complex(&mut t, row, ci, block(k - m), C::new(0.0, 1.0), re_row);
                push_complex(&mut t, row, ci, block(k + m), C::new(0.0, -1.0), re_row);
                if m == k {
                    let s = C::new(0.0, m as f64 * fs.omega);
                    push_complex(&mut t, row, cr, &mass, s, re_row);
                    push_complex(&mut t, row, ci, &mass, s * C::new(0.0, 1.0), re_row);
                }
            }
        }
    }
    let mut domega = vec![0.0; n];
    for (k, h) in fs.harmonics.iter().enumerate() {
        let v: Vec<C> = mass.matvec(h).into_iter().map(|z| z * C::new(0.0, (k + 1) as f64)).collect();
        domega.extend(v.iter().map(|z| z.re));
        domega.extend(v.iter().map(|z| z.im));
    }
    Ok((t.build(), domega))
}

/// Harmonic residual derivative with respect to parameter `j`, from the
/// discrete Fourier transform of time samples (exact for cubic states).
pub(crate) fn hb_param_gradient(pb: &dyn Problem, fs: &FourierState, p: &Parameters, j: usize) -> Vec<f64> {
    let big_n = fs.order();
    let s = 6 * big_n + 2;
    let n = fs.dim();
    let mut acc = vec![vec![ZERO; n]; big_n + 1];
    for i in 0..s {
        let t = fs.period() * i as f64 / s as f64;
        let q = sample_time(fs, t);
        let mut f = pb.param_gradient(&q, p, j);
        let dm = pb.mass_param_gradient_apply(&q, p, j, &time_derivative(fs, t));
        f.iter_mut().zip(&dm).for_each(|(a, b)| *a += b);
        for (k, a) in acc.iter_mut().enumerate() {
            let e = C::from_polar(1.0 / s as f64, -(k as f64) * fs.omega * t);
            a.iter_mut().zip(&f).for_each(|(z, v)| *z += e * v);
        }
    }
    let mut out: Vec<f64> = acc[0].iter().map(|z| z.re).collect();
    for a in &acc[1..] {
        out.extend(a.iter().map(|z| z.re));
        out.extend(a.iter().map(|z| z.im));
    }
    out
}

fn time_derivative(fs: &FourierState, t: f64) -> Vec<f64> {
    let mut q = vec![0.0; fs.dim()];
    for (k, h) in fs.harmonics.iter().enumerate() {
        let kw = (k + 1) as f64 * fs.omega;
        let e = C::new(0.0, kw) * C::from_polar(1.0, kw * t);
        for (qi, z) in q.iter_mut().zip(h) {
            *qi += 2.0 * (z * e).re;
        }
    }
    q
}

#[derive(Debug, Clone, PartialEq)]
pub struct HBSettings {
    pub order: usize,
    pub newton: NewtonSettings,
    /// Defaults to the initial guess.
    pub phase_reference: Option<FourierState>,
}

impl Default for HBSettings {
    fn default() -> Self {
        Self { order: 4, newton: NewtonSettings::default(), phase_reference: None }
    }
}

impl HBSettings {
    pub fn validate(&self) -> Result<()> {
        if self.order == 0 {
            return Err(Error::InvalidConfiguration("harmonic order must be at least 1".into()));
        }
        self.newton.validate()
    }
}

fn is_steady(fs: &FourierState) -> bool {
    let scale = norm(&fs.mean).max(1.0);
    fs.harmonic_norms().iter().all(|h| *h <= 1e-8 * scale)
}

/// Packed residual including the phase row.
pub(crate) fn full_residual(pb: &dyn Problem, fs: &FourierState, reference: &FourierState, p: &Parameters) -> Result<Vec<f64>> {
    let mut r = hb_residual(pb, fs, p)?.packed();
    r.push(phase_constraint(pb, fs, reference, p)?.0);
    Ok(r)
}

/// Square jacobian of [`full_residual`] with respect to the packed unknowns.
pub(crate) fn full_jacobian(pb: &dyn Problem, fs: &FourierState, reference: &FourierState, p: &Parameters) -> Result<SparseMatrix> {
    let (core, domega) = hb_jacobian(pb, fs, p)?;
    let (_, row) = phase_constraint(pb, fs, reference, p)?;
    let size = core.nrows() + 1;
    let mut t = TripletBuilder::new(size, size);
    t.add_block(0, 0, &core, 1.0);
    for (i, v) in domega.iter().enumerate() {
        if *v != 0.0 {
            t.push(i, size - 1, *v);
        }
    }
    for (i, v) in row.iter().enumerate() {
        if *v != 0.0 {
            t.push(size - 1, i, *v);
        }
    }
    Ok(t.build())
}

/// Orients a converged state so that `omega > 0`.
fn canonical(mut fs: FourierState) -> FourierState {
    if fs.omega < 0.0 {
        fs.omega = -fs.omega;
        fs.harmonics.iter_mut().for_each(|h| h.iter_mut().for_each(|z| *z = z.conj()));
    }
    fs
}

/// Newton iteration on the harmonic balance equations with the phase constraint.
pub fn hb_solve(pb: &dyn Problem, guess: &FourierState, p: &Parameters, settings: &HBSettings) -> Result<FourierState> {
    settings.validate()?;
    let guess = guess.with_order(settings.order);
    check_capable(pb, &guess)?;
    if is_steady(&guess) {
        return Err(Error::CollapsedToSteady);
    }
    let reference = settings.phase_reference.clone().map(|r| r.with_order(settings.order)).unwrap_or_else(|| guess.clone());
    let (n, order) = (guess.dim(), guess.order());
    let ns = &settings.newton;
    let mut x = guess.pack();
    let mut r = full_residual(pb, &guess, &reference, p)?;
    let mut history = vec![norm(&r)];
    let tol = ns.abs_tol.max(ns.rel_tol * history[0]);
    let mut it = 0;
    loop {
        let fs = FourierState::unpack(&x, n, order)?;
        let rn = *history.last().unwrap();
        if !rn.is_finite() {
            return Err(divergence(it, &x, history, "non-finite residual"));
        }
        if rn <= tol {
            if is_steady(&fs) {
                return Err(Error::CollapsedToSteady);
            }
            return Ok(canonical(fs));
        }
        if it == ns.max_iterations {
            return Err(divergence(it, &x, history, "maximum iterations reached"));
        }
        let jac = full_jacobian(pb, &fs, &reference, p)?;
        let f = match factor(&jac) {
            Ok(f) => f,
            Err(_) => return Err(divergence(it, &x, history, "singular jacobian")),
        };
        let dx = f.solve(&r, false)?;
        let mut step = 1.0;
        loop {
            let trial: Vec<f64> = x.iter().zip(&dx).map(|(a, d)| a - step * d).collect();
            let tfs = FourierState::unpack(&trial, n, order)?;
            let tr = if tfs.omega != 0.0 { full_residual(pb, &tfs, &reference, p)? } else { vec![f64::NAN] };
            let tn = norm(&tr);
            let accept = match ns.damping {
                Damping::None => true,
                Damping::Backtracking { shrink, min_step } => tn < rn || step * shrink < min_step,
            };
            if accept {
                x = trial;
                r = tr;
                history.push(tn);
                break;
            }
            if let Damping::Backtracking { shrink, .. } = ns.damping {
                step *= shrink;
            }
        }
        it += 1;
    }
}

fn divergence(it: usize, x: &[f64], history: Vec<f64>, reason: &str) -> Error {
    Error::Divergence(DivergenceReport {
        iterations: it,
        residual_norm: *history.last().unwrap_or(&f64::NAN),
        iterate: x.to_vec(),
        history,
        reason: reason.into(),
    })
}
