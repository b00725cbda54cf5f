use super::*;
use crate::continuation::{StepControl, Stop};
use crate::problem::{brusselator_0d, brusselator_1d, scalar_cusp, scalar_fold, scalar_pitchfork};
use crate::stability::eigs;

fn c1() -> Vec<C> {
    vec![C::new(1.0, 0.0)]
}

fn fold_params(a: f64) -> Parameters {
    scalar_fold().default_parameters().with_value("a1", a).unwrap()
}

#[test]
fn criticality_hand_value() {
    let pb = scalar_fold();
    let c = criticality(&pb, &[0.1], &fold_params(-0.01), 0.0, &c1(), &c1()).unwrap();
    assert!((c.g - C::new(0.2, 0.0)).norm() < 1e-14, "{}", c.g);
    assert!((c.direct[0] - 1.0).norm() < 1e-14);
    assert!((c.adjoint[0] - 1.0).norm() < 1e-14);
}

#[test]
fn criticality_vanishes_towards_fold() {
    let pb = scalar_fold();
    let gs: Vec<f64> = [0.1, 0.01, 0.001]
        .iter()
        .map(|&q| criticality(&pb, &[q], &fold_params(-q * q), 0.0, &c1(), &c1()).unwrap().g.norm())
        .collect();
    assert!(gs[0] > gs[1] && gs[1] > gs[2], "{gs:?}");
    let exact = criticality(&pb, &[0.0], &fold_params(0.0), 0.0, &c1(), &c1()).unwrap();
    assert_eq!(exact.g.norm(), 0.0);
}

#[test]
fn criticality_rejects_zero_seed() {
    let pb = scalar_fold();
    let r = criticality(&pb, &[0.1], &fold_params(0.0), 0.0, &[C::new(0.0, 0.0)], &c1());
    assert!(matches!(r, Err(Error::DegenerateBordering)));
}

#[test]
fn fold_located_and_normal_form() {
    let pb = scalar_fold();
    let bif = locate_bifurcation(&pb, LocateKind::Zero, &[0.1], &fold_params(-0.01), 0.0, (&c1(), &c1()), &LocatorSettings::default())
        .unwrap();
    assert_eq!(bif.kind, BifKind::Fold);
    assert!(bif.q[0].abs() + bif.alpha().abs() < 1e-8, "{:?} {}", bif.q, bif.alpha());
    let nf = bif.normal_form.as_ref().unwrap();
    assert_eq!(nf.form, NormalFormKind::Quadratic);
    assert!((nf.eigen_drift[0] - C::new(-1.0, 0.0)).norm() < 1e-8, "{:?}", nf.eigen_drift);
    assert!((nf.beta - C::new(-1.0, 0.0)).norm() < 1e-6, "{}", nf.beta);
}

#[test]
fn pitchfork_exact_and_real() {
    let pb = scalar_pitchfork();
    let p = pb.default_parameters().with_value("a1", 0.1).unwrap();
    let bif = locate_bifurcation(&pb, LocateKind::Zero, &[0.0], &p, 0.0, (&c1(), &c1()), &LocatorSettings::default()).unwrap();
    assert_eq!(bif.kind, BifKind::Pitchfork);
    assert_eq!(bif.q[0], 0.0);
    assert_eq!(bif.alpha(), 0.0);
    let nf = bif.normal_form.as_ref().unwrap();
    assert_eq!(nf.form, NormalFormKind::Cubic);
    assert_eq!(nf.beta.im, 0.0);
    assert!((nf.beta.re + 1.0).abs() < 1e-12, "{}", nf.beta);
    assert!((nf.eigen_drift[0] - C::new(1.0, 0.0)).norm() < 1e-12);
    assert_eq!(nf.onset, Onset::Supercritical);
    assert_eq!(nf.reversed_onset, Onset::Subcritical);
}

#[test]
fn classification_threshold() {
    let pb = scalar_pitchfork();
    let p = pb.default_parameters().with_value("a1", 0.0).unwrap();
    let bif = BifPoint {
        kind: BifKind::Pitchfork,
        q: vec![0.0],
        params: p,
        omega: 0.0,
        direct_mode: c1(),
        adjoint_mode: c1(),
        g_residual: C::new(0.0, 0.0),
        normal_form: None,
    };
    assert_eq!(classify_zero_eigenvalue(&pb, &bif, 0.0), BifKind::Pitchfork);
    let fold = scalar_fold();
    let fb = BifPoint { params: fold_params(0.0), ..bif };
    assert_eq!(classify_zero_eigenvalue(&fold, &fb, 1e-6), BifKind::Fold);
}

fn brusselator_hopf_guess(pb: &dyn Problem, l: f64, omega: f64) -> (Vec<f64>, Parameters, f64, Vec<C>, Vec<C>) {
    let p = pb.default_parameters().with_value("L", l).unwrap();
    let q = pb.initial_guess(&p);
    let pairs = eigs(pb, &q, &p, C::new(0.0, omega), 4, true).unwrap();
    let e = pairs
        .iter()
        .filter(|e| e.lambda.im > 0.0)
        .min_by(|a, b| a.lambda.re.abs().total_cmp(&b.lambda.re.abs()))
        .unwrap();
    (q, p, e.lambda.im, e.direct_mode.clone(), e.adjoint_mode.clone().unwrap())
}

fn assert_bif_invariants(pb: &dyn Problem, bif: &BifPoint) {
    assert!(norm(&pb.residual(&bif.q, &bif.params)) < 1e-8);
    assert!(bif.g_residual.norm() < 1e-8);
    let m = complex_mass(pb, &bif.q, &bif.params);
    let mq = m.matvec(&bif.direct_mode);
    assert!((cdot(&bif.direct_mode, &mq) - 1.0).norm() < 1e-10);
    assert!((cdot(&bif.adjoint_mode, &mq) - 1.0).norm() < 1e-10);
    let a = shifted_operator(pb, &bif.q, &bif.params, bif.omega);
    assert!(cnorm(&a.matvec(&bif.direct_mode)) < 1e-7, "{}", cnorm(&a.matvec(&bif.direct_mode)));
}

#[test]
fn brusselator_hopf_first_two_modes() {
    let pb = brusselator_1d(201).unwrap();
    for (k, l) in [(1.0, 0.5), (2.0, 1.0)] {
        let (q, p, w, v, a) = brusselator_hopf_guess(&pb, l, 2.14);
        let bif = locate_bifurcation(&pb, LocateKind::Hopf, &q, &p, w, (&v, &a), &LocatorSettings::default()).unwrap();
        let target = 0.51302 * k;
        assert!((bif.alpha() - target).abs() < 0.01 * target, "k={k}: L={}", bif.alpha());
        assert!((bif.omega - 2.1395).abs() < 0.01 * 2.1395, "{}", bif.omega);
        assert_bif_invariants(&pb, &bif);
    }
}

#[test]
fn g_derivatives_match_finite_differences() {
    let pb = brusselator_1d(21).unwrap();
    let (q, p, w, v, a) = brusselator_hopf_guess(&pb, 0.52, 2.14);
    let q: Vec<f64> = q.iter().enumerate().map(|(i, x)| x + 0.01 * (i as f64).sin()).collect();
    let crit = criticality(&pb, &q, &p, w, &v, &a).unwrap();
    let grad = g_gradient(&pb, &q, &p, w, &crit, &[4, 1]);
    let g = |q: &[f64], p: &Parameters, w: f64| criticality(&pb, q, p, w, &v, &a).unwrap().g;
    let h = 1e-6;
    let dir: Vec<f64> = (0..q.len()).map(|i| (0.3 * i as f64).cos()).collect();
    let shift = |s: f64| q.iter().zip(&dir).map(|(x, d)| x + s * d).collect::<Vec<_>>();
    let fd_q = (g(&shift(h), &p, w) - g(&shift(-h), &p, w)) / (2.0 * h);
    let an_q: C = grad.dq.iter().zip(&dir).map(|(r, d)| r * d).sum();
    assert!((fd_q - an_q).norm() < 1e-5 * an_q.norm(), "{fd_q} {an_q}");
    for (slot, j) in [4usize, 1].iter().enumerate() {
        let mut pp = p.clone();
        pp.set_value(*j, p.value(*j) + h);
        let mut pm = p.clone();
        pm.set_value(*j, p.value(*j) - h);
        let fd = (g(&q, &pp, w) - g(&q, &pm, w)) / (2.0 * h);
        assert!((fd - grad.dparams[slot]).norm() < 1e-5 * fd.norm().max(1e-3), "{fd} {}", grad.dparams[slot]);
    }
    let fd_w = (g(&q, &p, w + h) - g(&q, &p, w - h)) / (2.0 * h);
    assert!((fd_w - grad.domega).norm() < 1e-5 * fd_w.norm(), "{fd_w} {}", grad.domega);
    let direct = I * cdot(&crit.adjoint, &complex_mass(&pb, &q, &p).matvec(&crit.direct));
    assert!((direct - grad.domega).norm() <= 1e-14 * direct.norm());
}

#[test]
fn hopf_collapse_is_reclassified() {
    let pb = scalar_fold();
    let r = locate_bifurcation(&pb, LocateKind::Hopf, &[0.1], &fold_params(-0.01), 0.05, (&c1(), &c1()), &LocatorSettings::default());
    assert!(matches!(r, Err(Error::ReclassifyCandidate { .. })), "{r:?}");
}

fn brusselator_0d_hopf() -> (crate::problem::Brusselator, BifPoint) {
    let pb = brusselator_0d();
    let p = pb.default_parameters().with_value("B", 5.2).unwrap();
    let q = pb.initial_guess(&p);
    let e = eigs(&pb, &q, &p, C::new(0.0, 2.0), 1, true).unwrap().remove(0);
    let bif = locate_bifurcation(
        &pb,
        LocateKind::Hopf,
        &q,
        &p,
        e.lambda.im,
        (&e.direct_mode, e.adjoint_mode.as_ref().unwrap()),
        &LocatorSettings::default(),
    )
    .unwrap();
    (pb, bif)
}

#[test]
fn brusselator_0d_drift_matches_eigenvalue_fd() {
    let (pb, bif) = brusselator_0d_hopf();
    assert!((bif.alpha() - 5.0).abs() < 1e-9 && (bif.omega - 2.0).abs() < 1e-9);
    let nf = bif.normal_form.as_ref().unwrap();
    let lam = |b: f64| {
        let p = bif.params.clone().with_value("B", b).unwrap();
        let q = pb.initial_guess(&p);
        eigs(&pb, &q, &p, C::new(0.0, 2.0), 1, false).unwrap()[0].lambda
    };
    let fd = (lam(5.0 + 1e-4) - lam(5.0 - 1e-4)) / 2e-4;
    let drift = nf.eigen_drift[1];
    assert!((fd - drift).norm() < 1e-4 * fd.norm(), "{fd} {drift}");
}

/// RK4 for `q' = -R(q)`.
fn integrate(pb: &dyn Problem, p: &Parameters, mut q: Vec<f64>, dt: f64, steps: usize) -> Vec<Vec<f64>> {
    let f = |q: &[f64]| pb.residual(q, p).into_iter().map(|r| -r).collect::<Vec<f64>>();
    let axpy = |q: &[f64], k: &[f64], s: f64| q.iter().zip(k).map(|(a, b)| a + s * b).collect::<Vec<f64>>();
    let mut out = Vec::with_capacity(steps);
    for _ in 0..steps {
        let k1 = f(&q);
        let k2 = f(&axpy(&q, &k1, dt / 2.0));
        let k3 = f(&axpy(&q, &k2, dt / 2.0));
        let k4 = f(&axpy(&q, &k3, dt));
        for i in 0..q.len() {
            q[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        out.push(q.clone());
    }
    out
}

#[test]
fn brusselator_0d_onset_matches_time_integration() {
    let (pb, bif) = brusselator_0d_hopf();
    let nf = bif.normal_form.as_ref().unwrap();
    assert_eq!(nf.onset, Onset::Supercritical, "{}", nf.beta);
    let db = 0.02;
    let pred = weakly_nonlinear_predict(&bif, &[0.0, db]).unwrap();
    let predicted_x = 2.0 * pred.first_harmonic[0].norm();
    let p = bif.params.clone().with_value("B", 5.0 + db).unwrap();
    let q0 = vec![2.0 + 0.01, (5.0 + db) / 2.0];
    let traj = integrate(&pb, &p, q0, 0.01, 200_000);
    let tail = &traj[traj.len() - 2000..];
    let (lo, hi) = tail.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), s| (l.min(s[0]), h.max(s[0])));
    let observed = (hi - lo) / 2.0;
    assert!(observed > 1e-3, "cycle decayed: {observed}");
    assert!((observed - predicted_x).abs() < 0.2 * predicted_x, "{observed} vs {predicted_x}");
    assert!(matches!(weakly_nonlinear_predict(&bif, &[0.0, -db]), Err(Error::NoOrbit)));
}

#[test]
fn prediction_at_the_point_is_zero() {
    let (_, bif) = brusselator_0d_hopf();
    let pred = weakly_nonlinear_predict(&bif, &[0.0, 0.0]).unwrap();
    assert_eq!(pred.amplitude, 0.0);
}

#[test]
fn cubic_amplitude_root() {
    let pb = scalar_pitchfork();
    let p = pb.default_parameters().with_value("a1", 0.0).unwrap();
    let bif = locate_bifurcation(&pb, LocateKind::Zero, &[0.0], &p, 0.0, (&c1(), &c1()), &LocatorSettings::default()).unwrap();
    let pred = weakly_nonlinear_predict(&bif, &[0.04]).unwrap();
    assert!((pred.amplitude - 0.2).abs() < 1e-12);
    assert!((pred.steady_states[0][0] - 0.2).abs() < 1e-12 && (pred.steady_states[1][0] + 0.2).abs() < 1e-12);
}

#[test]
fn cusp_curve_follows_discriminant() {
    let pb = scalar_cusp();
    let p = pb.default_parameters().with_value("a1", 0.0).unwrap().with_value("a2", -0.27).unwrap();
    let guess = [0.3];
    let bif = locate_bifurcation(&pb, LocateKind::Zero, &guess, &p, 0.0, (&c1(), &c1()), &LocatorSettings::default()).unwrap();
    assert_eq!(bif.kind, BifKind::Fold);
    let control = StepControl { h0: 0.02, h_max: 0.05, ..Default::default() };
    let settings = CurveSettings {
        stop: Stop { param_min: -0.5, param_max: 0.1, max_points: 60 },
        ..Default::default()
    };
    let curve = trace_bifurcation_curve(&pb, &bif, "a2", &control, &settings).unwrap();
    assert!(curve.points.len() > 10);
    for pt in &curve.points {
        let (a1, a2) = (pt.params.value(0), pt.params.value(1));
        assert!((4.0 * a2.powi(3) + 27.0 * a1 * a1).abs() < 1e-6 * (1.0 + a2.abs().powi(3)), "{a1} {a2}");
    }
    let cusp: Vec<_> = curve.codim2_events.iter().filter(|e| e.kind == Codim2Kind::CuspCandidate).collect();
    assert_eq!(cusp.len(), 1, "{:?}", curve.codim2_events);
    let i = cusp[0].index;
    let (qa, qb) = (curve.points[i - 1].q[0], curve.points[i].q[0]);
    assert!(qa * qb <= 0.0, "{qa} {qb}");
}

#[test]
fn brusselator_hopf_curve_frequency() {
    let pb = brusselator_1d(61).unwrap();
    let (q, p, w, v, a) = brusselator_hopf_guess(&pb, 0.5, 2.14);
    let bif = locate_bifurcation(&pb, LocateKind::Hopf, &q, &p, w, (&v, &a), &LocatorSettings::default()).unwrap();
    let control = StepControl { h0: 0.02, h_max: 0.05, ..Default::default() };
    let settings = CurveSettings {
        stop: Stop { param_min: 5.2, param_max: 5.7, max_points: 12 },
        bidirectional: true,
        ..Default::default()
    };
    let curve = trace_bifurcation_curve(&pb, &bif, "B", &control, &settings).unwrap();
    assert!(curve.points.len() >= 5);
    let (dx, dy, aa) = (0.008, 0.004, 2.0f64);
    for pt in &curve.points {
        let b = pt.params.get("B").unwrap();
        let c = (aa * aa * dx + (b - 1.0) * dy) / (dx + dy);
        let omega = (aa * aa * b - c * c).sqrt();
        assert!((pt.omega - omega).abs() < 0.01 * omega, "B={b}: {} vs {omega}", pt.omega);
        let l = std::f64::consts::PI * ((dx + dy) / (b - aa * aa - 1.0)).sqrt();
        assert!((pt.alpha() - l).abs() < 0.01 * l, "B={b}: L={} vs {l}", pt.alpha());
    }
}

#[test]
fn single_point_curve() {
    let pb = scalar_fold();
    let bif = locate_bifurcation(&pb, LocateKind::Zero, &[0.1], &fold_params(-0.01), 0.0, (&c1(), &c1()), &LocatorSettings::default())
        .unwrap();
    let settings = CurveSettings { stop: Stop { max_points: 1, ..Default::default() }, ..Default::default() };
    let r = trace_bifurcation_curve(&pb, &bif, "a1", &StepControl::default(), &settings);
    assert!(matches!(r, Err(Error::InvalidConfiguration(_))));
    let pb = scalar_cusp();
    let p = pb.default_parameters().with_value("a2", -0.27).unwrap().with_value("a1", 0.0).unwrap();
    let bif = locate_bifurcation(&pb, LocateKind::Zero, &[0.3], &p, 0.0, (&c1(), &c1()), &LocatorSettings::default()).unwrap();
    let curve = trace_bifurcation_curve(&pb, &bif, "a2", &StepControl::default(), &settings).unwrap();
    assert_eq!(curve.points.len(), 1);
}
