//! Generalized eigenvalues of `(lambda M + J) x = 0` near a shift, by
//! shift-and-invert Krylov-Schur iteration in complex arithmetic.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{ComplexFactorization, ComplexSparse};
use crate::problem::{cdot as dotc, cnorm as vnorm, Parameters, Problem};

type C = Complex64;

#[derive(Debug, Clone, PartialEq)]
pub struct EigenPair {
    pub lambda: C,
    /// Unit 2-norm, largest entry real and positive.
    pub direct_mode: Vec<C>,
    /// Scaled so that `<adjoint, M direct> = 1` when requested.
    pub adjoint_mode: Option<Vec<C>>,
    /// `||(lambda M + J) x||_2 / ||x||_2`.
    pub residual_norm: f64,
}

impl EigenPair {
    pub fn growth_rate(&self) -> f64 {
        self.lambda.re
    }

    pub fn frequency(&self) -> f64 {
        self.lambda.im
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EigenSettings {
    pub shift: C,
    pub nev: usize,
    pub want_adjoint: bool,
    /// Ritz residual tolerance relative to the shift-inverted eigenvalue.
    pub tol: f64,
    pub max_restarts: usize,
    /// Problems up to this size use a dense decomposition.
    pub dense_threshold: usize,
}

impl Default for EigenSettings {
    fn default() -> Self {
        Self { shift: C::new(0.0, 0.0), nev: 6, want_adjoint: false, tol: 1e-12, max_restarts: 50, dense_threshold: 200 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stability {
    Stable,
    Unstable,
    Marginal,
}

pub const GROWTH_TOL: f64 = 1e-8;

/// Unstable if any growth rate exceeds `GROWTH_TOL`, marginal if any lies
/// within it, stable otherwise.
pub fn classify_stability(pairs: &[EigenPair]) -> Stability {
    if pairs.iter().any(|p| p.lambda.re > GROWTH_TOL) {
        Stability::Unstable
    } else if pairs.iter().any(|p| p.lambda.re.abs() <= GROWTH_TOL) {
        Stability::Marginal
    } else {
        Stability::Stable
    }
}

/// Eigenpairs of the linearization about `q` nearest `shift`.
pub fn eigs(
    pb: &dyn Problem,
    q: &[f64],
    p: &Parameters,
    shift: C,
    nev: usize,
    want_adjoint: bool,
) -> Result<Vec<EigenPair>> {
    let settings = EigenSettings { shift, nev, want_adjoint, ..Default::default() };
    eigs_with(pb, q, p, &settings)
}

pub fn eigs_with(pb: &dyn Problem, q: &[f64], p: &Parameters, settings: &EigenSettings) -> Result<Vec<EigenPair>> {
    if q.len() != pb.dim() {
        return Err(Error::DimensionMismatch { expected: pb.dim(), found: q.len() });
    }
    let j = ComplexSparse::real(pb.jacobian(q, p));
    let m = ComplexSparse::real(pb.mass_matrix(q, p));
    eigs_generalized(&j, &m, settings)
}

/// Eigenpairs of `(lambda M + A) x = 0` nearest `settings.shift`.
pub fn eigs_generalized(a: &ComplexSparse, m: &ComplexSparse, settings: &EigenSettings) -> Result<Vec<EigenPair>> {
    let n = a.dim();
    if m.dim() != n {
        return Err(Error::DimensionMismatch { expected: n, found: m.dim() });
    }
    if settings.nev == 0 || settings.nev > n {
        return Err(Error::InvalidConfiguration(format!("nev must lie in 1..={n}, got {}", settings.nev)));
    }
    let s = settings.shift;
    let shifted = a.add_scaled(m, s);
    let f = ComplexFactorization::new(&shifted).map_err(|e| match e {
        Error::SingularMatrix { .. } => Error::SingularShift,
        e => e,
    })?;
    let direct = |v: &[C]| f.solve(&m.matvec(v), false);
    let adjoint = |v: &[C]| f.solve(&m.adjoint_matvec(v), true);

    let dense = n <= settings.dense_threshold || n <= max_krylov_dim(settings.nev) + 1;
    let ritz = if dense {
        dense_ritz(n, &direct, settings.nev)?
    } else {
        krylov_schur(n, &direct, settings)?
    };

    let mut pairs: Vec<EigenPair> = ritz
        .into_iter()
        .map(|(mu, x)| {
            let lambda = s - 1.0 / mu;
            let x = normalize_phase(x);
            let residual_norm = eig_residual(a, m, lambda, &x);
            let pair = EigenPair { lambda, direct_mode: x, adjoint_mode: None, residual_norm };
            refine(a, m, pair)
        })
        .collect();
    sort_pairs(&mut pairs, s);

    if settings.want_adjoint {
        let left = if dense { dense_ritz(n, &adjoint, settings.nev)? } else { krylov_schur(n, &adjoint, settings)? };
        let mut used = vec![false; left.len()];
        for pair in pairs.iter_mut() {
            let target = (1.0 / (s - pair.lambda)).conj();
            let best = (0..left.len())
                .filter(|&i| !used[i])
                .min_by(|&i, &k| (left[i].0 - target).norm().total_cmp(&(left[k].0 - target).norm()))
                .ok_or(Error::EigenNotConverged { converged: 0, requested: settings.nev })?;
            used[best] = true;
            let y = &left[best].1;
            let c = dotc(y, &m.matvec(&pair.direct_mode));
            let y = if c.norm() > 1e-14 {
                y.iter().map(|v| v / c.conj()).collect()
            } else {
                y.clone()
            };
            pair.adjoint_mode = Some(y);
        }
    }
    Ok(pairs)
}

/// Rayleigh-quotient inverse iteration for pairs whose residual is poor, as
/// happens for exponents far from a shift that nearly coincides with another.
fn refine(a: &ComplexSparse, m: &ComplexSparse, mut pair: EigenPair) -> EigenPair {
    let scale = 1.0 + pair.lambda.norm();
    for _ in 0..3 {
        if pair.residual_norm <= 1e-11 * scale {
            break;
        }
        let sigma = pair.lambda + C::new(1e-9 * scale, 0.0);
        let Ok(f) = ComplexFactorization::new(&a.add_scaled(m, sigma)) else { break };
        let Ok(y) = f.solve(&m.matvec(&pair.direct_mode), false) else { break };
        let x = normalize_phase(y);
        let mx = m.matvec(&x);
        let denom = dotc(&x, &mx);
        if denom.norm() < 1e-12 {
            break;
        }
        let lambda = -dotc(&x, &a.matvec(&x)) / denom;
        let residual_norm = eig_residual(a, m, lambda, &x);
        if !(residual_norm < pair.residual_norm) {
            break;
        }
        pair = EigenPair { lambda, direct_mode: x, adjoint_mode: None, residual_norm };
    }
    pair
}

fn sort_pairs(pairs: &mut [EigenPair], s: C) {
    pairs.sort_by(|a, b| {
        let da = (a.lambda - s).norm();
        let db = (b.lambda - s).norm();
        if (da - db).abs() <= 1e-12 * da.max(db) {
            b.lambda.im.total_cmp(&a.lambda.im).then(b.lambda.re.total_cmp(&a.lambda.re))
        } else {
            da.total_cmp(&db)
        }
    });
}

fn max_krylov_dim(nev: usize) -> usize {
    (2 * nev + 10).max(30)
}

fn normalize_phase(mut x: Vec<C>) -> Vec<C> {
    let nrm = vnorm(&x);
    let big = x.iter().copied().max_by(|a, b| a.norm().total_cmp(&b.norm())).unwrap_or(C::new(1.0, 0.0));
    let phase = if big.norm() > 0.0 { big.conj() / big.norm() } else { C::new(1.0, 0.0) };
    for v in x.iter_mut() {
        *v *= phase / nrm;
    }
    x
}

fn eig_residual(a: &ComplexSparse, m: &ComplexSparse, lambda: C, x: &[C]) -> f64 {
    let ax = a.matvec(x);
    let mx = m.matvec(x);
    let r: Vec<C> = ax.iter().zip(&mx).map(|(u, v)| u + lambda * v).collect();
    vnorm(&r) / vnorm(x)
}

/// Eigenvector of an upper-triangular matrix for its `k`-th diagonal entry.
fn triangular_eigvec(t: &DMatrix<C>, k: usize) -> DVector<C> {
    let mut y = DVector::from_element(t.ncols(), C::new(0.0, 0.0));
    y[k] = C::new(1.0, 0.0);
    let scale = t.iter().map(|v| v.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    for i in (0..k).rev() {
        let mut acc = C::new(0.0, 0.0);
        for j in i + 1..=k {
            acc += t[(i, j)] * y[j];
        }
        let mut d = t[(i, i)] - t[(k, k)];
        if d.norm() < f64::EPSILON * scale {
            d = C::new(f64::EPSILON * scale, 0.0);
        }
        y[i] = -acc / d;
    }
    y
}

/// Moves the `k+1` diagonal entry of an upper-triangular `t` to position `k`,
/// updating the Schur vectors `z`.
fn swap_schur(t: &mut DMatrix<C>, z: &mut DMatrix<C>, k: usize) {
    let (a, b, c) = (t[(k, k)], t[(k, k + 1)], t[(k + 1, k + 1)]);
    let (x1, x2) = (b, c - a);
    let r = (x1.norm_sqr() + x2.norm_sqr()).sqrt();
    if r == 0.0 {
        return;
    }
    let (g1, g2) = (x1 / r, x2 / r);
    // G = [[g1, -conj(g2)], [g2, conj(g1)]]; t <- G^H t G, z <- z G.
    let n = t.ncols();
    for j in 0..n {
        let (u, v) = (t[(k, j)], t[(k + 1, j)]);
        t[(k, j)] = g1.conj() * u + g2.conj() * v;
        t[(k + 1, j)] = -g2 * u + g1 * v;
    }
    for i in 0..n {
        let (u, v) = (t[(i, k)], t[(i, k + 1)]);
        t[(i, k)] = u * g1 + v * g2;
        t[(i, k + 1)] = -u * g2.conj() + v * g1.conj();
    }
    t[(k + 1, k)] = C::new(0.0, 0.0);
    for i in 0..z.nrows() {
        let (u, v) = (z[(i, k)], z[(i, k + 1)]);
        z[(i, k)] = u * g1 + v * g2;
        z[(i, k + 1)] = -u * g2.conj() + v * g1.conj();
    }
}

/// Sorts the Schur form so diagonal magnitudes decrease.
fn sort_schur(t: &mut DMatrix<C>, z: &mut DMatrix<C>) {
    let n = t.ncols();
    for i in 0..n {
        let j = (i..n).max_by(|&a, &b| t[(a, a)].norm().total_cmp(&t[(b, b)].norm())).unwrap();
        for k in (i..j).rev() {
            swap_schur(t, z, k);
        }
    }
}

fn schur(h: DMatrix<C>) -> (DMatrix<C>, DMatrix<C>) {
    let (z, t) = nalgebra::Schur::new(h).unpack();
    (z, t)
}

/// Largest-magnitude eigenpairs of a small operator from its dense image.
fn dense_ritz(n: usize, op: &dyn Fn(&[C]) -> Result<Vec<C>>, nev: usize) -> Result<Vec<(C, Vec<C>)>> {
    let mut dense = DMatrix::from_element(n, n, C::new(0.0, 0.0));
    let mut e = vec![C::new(0.0, 0.0); n];
    for j in 0..n {
        e[j] = C::new(1.0, 0.0);
        let col = op(&e)?;
        e[j] = C::new(0.0, 0.0);
        for i in 0..n {
            dense[(i, j)] = col[i];
        }
    }
    let (mut z, mut t) = schur(dense);
    sort_schur(&mut t, &mut z);
    let top = t[(0, 0)].norm();
    let mut out = Vec::with_capacity(nev);
    for k in 0..nev {
        let mu = t[(k, k)];
        if mu.norm() <= 1e-13 * top {
            break;
        }
        let y = triangular_eigvec(&t, k);
        let x = &z * y;
        out.push((mu, x.iter().copied().collect()));
    }
    if out.len() < nev {
        return Err(Error::EigenNotConverged { converged: out.len(), requested: nev });
    }
    Ok(out)
}

fn start_vector(n: usize) -> Vec<C> {
    let v: Vec<C> = (0..n)
        .map(|i| {
            let x = i as f64 + 1.0;
            C::new(1.0 + 0.5 * (0.7 * x).sin(), 0.3 * (1.3 * x).cos())
        })
        .collect();
    let nrm = vnorm(&v);
    v.into_iter().map(|z| z / nrm).collect()
}

/// Orthogonalizes `w` against `basis` twice, returning the coefficients.
fn orthogonalize(basis: &[Vec<C>], w: &mut [C]) -> Vec<C> {
    let mut coeffs = vec![C::new(0.0, 0.0); basis.len()];
    for _ in 0..2 {
        for (c, v) in coeffs.iter_mut().zip(basis) {
            let h = dotc(v, w);
            *c += h;
            for (wi, vi) in w.iter_mut().zip(v) {
                *wi -= h * vi;
            }
        }
    }
    coeffs
}

/// Unit vector orthogonal to `basis`, for restarting after breakdown.
fn fresh_direction(n: usize, basis: &[Vec<C>], seed: usize) -> Vec<C> {
    for attempt in 0..n {
        let mut w: Vec<C> = (0..n)
            .map(|i| {
                let x = (i + 1) as f64 * (seed + attempt + 2) as f64;
                C::new((x * 0.618).sin(), (x * 0.414).cos())
            })
            .collect();
        orthogonalize(basis, &mut w);
        let nrm = vnorm(&w);
        if nrm > 1e-8 {
            return w.into_iter().map(|z| z / nrm).collect();
        }
    }
    vec![C::new(0.0, 0.0); n]
}

fn krylov_schur(n: usize, op: &dyn Fn(&[C]) -> Result<Vec<C>>, settings: &EigenSettings) -> Result<Vec<(C, Vec<C>)>> {
    let nev = settings.nev;
    let m = max_krylov_dim(nev).min(n - 1);
    let keep = (nev + m) / 2;
    let mut basis: Vec<Vec<C>> = vec![start_vector(n)];
    let mut h = DMatrix::from_element(m + 1, m, C::new(0.0, 0.0));
    let mut k = 0;
    let mut converged = 0;

    for restart in 0..=settings.max_restarts {
        for j in k..m {
            let mut w = op(&basis[j])?;
            let coeffs = orthogonalize(&basis, &mut w);
            for (i, c) in coeffs.into_iter().enumerate() {
                h[(i, j)] = c;
            }
            let beta = vnorm(&w);
            let scale = h.column(j).iter().map(|v| v.norm()).fold(beta, f64::max);
            if beta <= 1e-13 * scale {
                h[(j + 1, j)] = C::new(0.0, 0.0);
                basis.push(fresh_direction(n, &basis, j + restart * m));
            } else {
                h[(j + 1, j)] = C::new(beta, 0.0);
                basis.push(w.into_iter().map(|z| z / beta).collect());
            }
        }

        let hm = h.view((0, 0), (m, m)).into_owned();
        let coupling = h[(m, m - 1)];
        let (mut z, mut t) = schur(hm);
        sort_schur(&mut t, &mut z);
        let b: Vec<C> = (0..m).map(|j| coupling * z[(m - 1, j)]).collect();

        let mut ritz = Vec::with_capacity(nev);
        converged = 0;
        for i in 0..nev {
            let y = triangular_eigvec(&t, i);
            let est: C = (0..=i).map(|j| b[j] * y[j]).sum();
            let res = est.norm() / y.norm();
            if res <= settings.tol * t[(i, i)].norm() {
                converged += 1;
            }
            ritz.push((t[(i, i)], y));
        }
        if converged == nev {
            return Ok(ritz
                .into_iter()
                .map(|(mu, y)| {
                    let zy = &z * y;
                    let mut x = vec![C::new(0.0, 0.0); n];
                    for (c, v) in zy.iter().zip(&basis) {
                        for (xi, vi) in x.iter_mut().zip(v) {
                            *xi += c * vi;
                        }
                    }
                    (mu, x)
                })
                .collect());
        }

        // Truncate to the leading `keep` Schur vectors plus the residual direction.
        let mut new_basis = Vec::with_capacity(m + 1);
        for c in 0..keep {
            let mut x = vec![C::new(0.0, 0.0); n];
            for (r, v) in basis.iter().take(m).enumerate() {
                let coef = z[(r, c)];
                for (xi, vi) in x.iter_mut().zip(v) {
                    *xi += coef * vi;
                }
            }
            new_basis.push(x);
        }
        new_basis.push(basis[m].clone());
        basis = new_basis;
        h.fill(C::new(0.0, 0.0));
        for i in 0..keep {
            for j in i..keep {
                h[(i, j)] = t[(i, j)];
            }
            h[(keep, i)] = b[i];
        }
        k = keep;
    }
    Err(Error::EigenNotConverged { converged, requested: nev })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::SparseMatrix;
    use crate::problem::{brusselator_1d, LinearProblem};

    fn c(re: f64, im: f64) -> C {
        C::new(re, im)
    }

    #[test]
    fn diagonal_system() {
        let pb = LinearProblem::new(SparseMatrix::from_diagonal(&[1.0, 2.0, 3.0]), vec![0.0; 3]);
        let p = pb.default_parameters();
        let pairs = eigs(&pb, &[0.0; 3], &p, c(0.0, 0.0), 3, true).unwrap();
        let lams: Vec<C> = pairs.iter().map(|e| e.lambda).collect();
        for (l, want) in lams.iter().zip([-1.0, -2.0, -3.0]) {
            assert!((l - c(want, 0.0)).norm() < 1e-14, "{lams:?}");
        }
        for e in &pairs {
            assert!(e.residual_norm < 1e-14);
        }
    }

    #[test]
    fn symmetric_biorthogonality() {
        let k = SparseMatrix::from_triplets(
            3,
            3,
            &[(0, 0, 2.0), (0, 1, -1.0), (1, 0, -1.0), (1, 1, 2.0), (1, 2, -1.0), (2, 1, -1.0), (2, 2, 2.0)],
        );
        let pb = LinearProblem::new(k, vec![0.0; 3]);
        let p = pb.default_parameters();
        let pairs = eigs(&pb, &[0.0; 3], &p, c(0.1, 0.0), 3, true).unwrap();
        for i in 0..3 {
            let ai = pairs[i].adjoint_mode.as_ref().unwrap();
            for j in 0..3 {
                let ip = dotc(ai, &pairs[j].direct_mode);
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((ip - c(want, 0.0)).norm() < 1e-10, "{i} {j} {ip}");
            }
        }
    }

    #[test]
    fn singular_shift() {
        let pb = LinearProblem::new(SparseMatrix::from_diagonal(&[1.0, 2.0]), vec![0.0; 2]);
        let p = pb.default_parameters();
        assert!(matches!(eigs(&pb, &[0.0; 2], &p, c(-1.0, 0.0), 1, false), Err(Error::SingularShift)));
    }

    #[test]
    fn brusselator_critical_pair() {
        let pb = brusselator_1d(201).unwrap();
        let p = pb.default_parameters().with_value("L", 0.51302).unwrap();
        let q = pb.initial_guess(&p);
        let pairs = eigs(&pb, &q, &p, c(0.0, 2.0), 2, false).unwrap();
        let top = &pairs[0];
        assert!(top.lambda.re.abs() < 0.01, "{}", top.lambda);
        assert!((top.lambda.im - 2.1395).abs() < 0.01 * 2.1395, "{}", top.lambda);
    }

    #[test]
    fn classification() {
        let mk = |re: f64| EigenPair {
            lambda: c(re, 1.0),
            direct_mode: vec![c(1.0, 0.0)],
            adjoint_mode: None,
            residual_norm: 0.0,
        };
        assert_eq!(classify_stability(&[mk(-0.2), mk(-0.1)]), Stability::Stable);
        assert_eq!(classify_stability(&[mk(-0.2), mk(0.05)]), Stability::Unstable);
        assert_eq!(classify_stability(&[mk(-0.2), mk(0.0)]), Stability::Marginal);
    }

    #[test]
    fn krylov_matches_dense_oracle() {
        let pb = brusselator_1d(61).unwrap();
        let p = pb.default_parameters().with_value("L", 0.7).unwrap();
        let q = pb.initial_guess(&p);
        let oracle = (-pb.jacobian(&q, &p).to_dense()).complex_eigenvalues();
        for shift in [c(0.0, 0.0), c(0.3, 2.0)] {
            let settings = EigenSettings { shift, nev: 6, want_adjoint: true, dense_threshold: 0, ..Default::default() };
            let kr = eigs_with(&pb, &q, &p, &settings).unwrap();
            let settings = EigenSettings { dense_threshold: 1000, ..settings };
            let de = eigs_with(&pb, &q, &p, &settings).unwrap();
            for (a, b) in kr.iter().zip(&de) {
                assert!((a.lambda - b.lambda).norm() < 1e-8, "{} {}", a.lambda, b.lambda);
                assert!(a.residual_norm < 1e-8, "{}", a.residual_norm);
                let nearest = oracle.iter().map(|z| (z - a.lambda).norm()).fold(f64::INFINITY, f64::min);
                assert!(nearest < 1e-8);
                let y = a.adjoint_mode.as_ref().unwrap();
                let jt = pb.jacobian(&q, &p).transpose();
                let yr: Vec<f64> = y.iter().map(|z| z.re).collect();
                let yi: Vec<f64> = y.iter().map(|z| z.im).collect();
                let (ar, ai) = (jt.matvec(&yr), jt.matvec(&yi));
                let lc = a.lambda.conj();
                let res: f64 = (0..y.len())
                    .map(|i| (c(ar[i], ai[i]) + lc * y[i]).norm_sqr())
                    .sum::<f64>()
                    .sqrt();
                assert!(res < 1e-7 * vnorm(y), "adjoint residual {res}");
            }
        }
    }
}
