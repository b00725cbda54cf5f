use super::{jacobian_harmonics, FourierState, C, ZERO};
use crate::error::{Error, Result};
use crate::linalg::{ComplexSparse, SparseMatrix, TripletBuilder};
use crate::problem::{cdot, cnorm, Parameters, Problem};
use crate::stability::{eigs_generalized, EigenSettings};

#[derive(Debug, Clone, PartialEq)]
pub struct FloquetPair {
    pub exponent: C,
    /// Blocks ordered `m = 0, 1, -1, 2, -2, ...`.
    pub mode: Vec<Vec<C>>,
    /// `|Im exponent| <= omega / 2`.
    pub principal: bool,
    /// The neutral mode along the time derivative of the orbit.
    pub phase_mode: bool,
}

/// Block position of harmonic `m` in the Hill ordering.
fn slot(m: i64) -> usize {
    match m {
        0 => 0,
        m if m > 0 => 2 * m as usize - 1,
        m => 2 * (-m) as usize,
    }
}

fn harmonic_of(slot: usize) -> i64 {
    if slot == 0 {
        0
    } else if slot % 2 == 1 {
        slot.div_ceil(2) as i64
    } else {
        -((slot / 2) as i64)
    }
}

fn add_complex(re: &mut TripletBuilder, im: &mut TripletBuilder, row: usize, col: usize, z: &ComplexSparse, s: C) {
    re.add_block(row, col, &z.re, s.re);
    im.add_block(row, col, &z.re, s.im);
    if let Some(zi) = &z.im {
        re.add_block(row, col, zi, -s.im);
        im.add_block(row, col, zi, s.re);
    }
}

/// Hill operator `A` and mass `B` of the eigenproblem `(lambda B + A) x = 0`.
pub(crate) fn hill_operators(pb: &dyn Problem, fs: &FourierState, p: &Parameters) -> Result<(ComplexSparse, ComplexSparse)> {
    let jh = jacobian_harmonics(pb, fs, p)?;
    let big_n = fs.order() as i64;
    let n = fs.dim();
    let size = (2 * big_n as usize + 1) * n;
    let mass = ComplexSparse::real(pb.mass_matrix(&fs.mean, p));
    let (mut are, mut aim) = (TripletBuilder::new(size, size), TripletBuilder::new(size, size));
    let (mut bre, mut bim) = (TripletBuilder::new(size, size), TripletBuilder::new(size, size));
    for k in -big_n..=big_n {
        let row = n * slot(k);
        for m in -big_n..=big_n {
            let col = n * slot(m);
            add_complex(&mut are, &mut aim, row, col, &jh[(k - m + 2 * big_n) as usize], C::new(1.0, 0.0));
        }
        add_complex(&mut are, &mut aim, row, row, &mass, C::new(0.0, k as f64 * fs.omega));
        add_complex(&mut bre, &mut bim, row, row, &mass, C::new(1.0, 0.0));
    }
    let pack = |re: TripletBuilder, im: TripletBuilder| {
        let im: SparseMatrix = im.build();
        let im = if im.iter().all(|(_, _, v)| v == 0.0) { None } else { Some(im) };
        ComplexSparse { re: re.build(), im }
    };
    Ok((pack(are, aim), pack(bre, bim)))
}

/// Hill-ordered coefficients of the orbit's time derivative.
pub(crate) fn phase_vector(fs: &FourierState) -> Vec<C> {
    let big_n = fs.order() as i64;
    let n = fs.dim();
    let mut v = vec![ZERO; (2 * big_n as usize + 1) * n];
    for m in -big_n..=big_n {
        if m == 0 {
            continue;
        }
        let c = fs.coeff(m);
        let s = C::new(0.0, m as f64 * fs.omega);
        let base = n * slot(m);
        for (i, z) in c.iter().enumerate() {
            v[base + i] = s * z;
        }
    }
    v
}

/// Floquet exponents nearest `shift` by Hill's method; a shift sitting on an
/// exponent is nudged along the real axis.
pub fn floquet(pb: &dyn Problem, fs: &FourierState, p: &Parameters, shift: C, nev: usize) -> Result<Vec<FloquetPair>> {
    let (a, b) = hill_operators(pb, fs, p)?;
    let mut s = shift;
    let mut pairs = Err(Error::SingularShift);
    for attempt in 0..4 {
        let settings = EigenSettings { shift: s, nev, want_adjoint: false, ..Default::default() };
        pairs = eigs_generalized(&a, &b, &settings);
        match pairs {
            Err(Error::SingularShift) => s += C::new(1e-7 * fs.omega.max(1.0) * 10f64.powi(attempt), 0.0),
            _ => break,
        }
    }
    let pairs = pairs?;
    let n = fs.dim();
    let blocks = 2 * fs.order() + 1;
    let phase = phase_vector(fs);
    let phase_norm = cnorm(&phase);
    let alignment = |x: &[C]| if phase_norm == 0.0 { 0.0 } else { cdot(&phase, x).norm() / (phase_norm * cnorm(x)) };
    let tagged = pairs
        .iter()
        .enumerate()
        .filter(|(_, e)| e.lambda.norm() < 1e-3 * fs.omega)
        .max_by(|(_, x), (_, y)| alignment(&x.direct_mode).total_cmp(&alignment(&y.direct_mode)))
        .map(|(i, _)| i);
    Ok(pairs
        .into_iter()
        .enumerate()
        .map(|(i, e)| {
            let mode = (0..blocks).map(|s| e.direct_mode[s * n..(s + 1) * n].to_vec()).collect();
            FloquetPair {
                exponent: e.lambda,
                mode,
                principal: e.lambda.im.abs() <= 0.5 * fs.omega * (1.0 + 1e-12),
                phase_mode: Some(i) == tagged,
            }
        })
        .collect())
}

/// Harmonic index of each block of a Floquet mode.
pub fn mode_harmonics(order: usize) -> Vec<i64> {
    (0..2 * order + 1).map(harmonic_of).collect()
}
