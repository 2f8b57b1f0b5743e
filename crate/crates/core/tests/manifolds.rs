use proptest::prelude::*;

use geohnn_core::manifolds::*;
use geohnn_core::linalg;
use geohnn_core::rng;
use geohnn_core::tensor::Tensor;

fn diag(d: &[f64]) -> SpdPoint {
    SpdPoint::new(Tensor::diag(d)).unwrap()
}

fn sym_t(d: &[f64]) -> SymTangent {
    SymTangent::new(Tensor::diag(d)).unwrap()
}

fn random_spd(r: &mut rng::Stream, n: usize) -> SpdPoint {
    let a = rng::normal_tensor(r, &[n, n], 1.0);
    let m = a.matmul(&a.transpose().unwrap()).unwrap().scale(1.0 / n as f64).add(&Tensor::eye(n)).unwrap();
    SpdPoint::from_symmetrized(&m).unwrap()
}

fn random_sym(r: &mut rng::Stream, n: usize, max_norm: f64) -> SymTangent {
    let a = linalg::sym(&rng::normal_tensor(r, &[n, n], 1.0)).unwrap();
    let s = rng::uniform(r, 0.0, max_norm) / a.frobenius_norm().max(1e-300);
    SymTangent::from_symmetrized(&a.scale(s)).unwrap()
}

#[test]
fn validation() {
    assert!(SpdPoint::new(Tensor::diag(&[1.0, -1.0])).is_err());
    assert!(SpdPoint::new(Tensor::matrix(2, 2, vec![1.0, 0.5, 0.0, 1.0]).unwrap()).is_err());
    assert!(SymTangent::new(Tensor::matrix(2, 2, vec![1.0, 0.5, 0.0, 1.0]).unwrap()).is_err());
    assert!(SymTangent::new(Tensor::diag(&[-3.0, 2.0])).is_ok());
}

#[test]
fn exp_examples() {
    let m0 = diag(&[1.0, 4.0]);
    assert!(spd_exp(&m0, &SymTangent::zeros(2)).unwrap().mat().max_abs_diff(m0.mat()) < 1e-14);
    let xi = SymTangent::new(Tensor::matrix(2, 2, vec![0.2, -0.7, -0.7, 1.1]).unwrap()).unwrap();
    let e = spd_exp(&SpdPoint::identity(2), &xi).unwrap();
    assert!(e.mat().max_abs_diff(&linalg::expm(xi.mat()).unwrap()) < 1e-13);
    let out = spd_exp(&m0, &sym_t(&[0.0, 4.0 * core::f64::consts::LN_2])).unwrap();
    assert!(out.mat().max_abs_diff(&Tensor::diag(&[1.0, 8.0])) < 1e-13);
    let r = spd_retract(&m0, &sym_t(&[0.0, 4.0 * core::f64::consts::LN_2])).unwrap();
    assert_eq!(r, out);
}

#[test]
fn log_examples() {
    let m0 = diag(&[1.0, 4.0]);
    assert!(spd_log(&m0, &m0).unwrap().mat().max_abs() < 1e-14);
    let e = core::f64::consts::E;
    assert!(spd_log(&SpdPoint::identity(2), &diag(&[e, e])).unwrap().mat().max_abs_diff(&Tensor::eye(2)) < 1e-14);
    let l = spd_log(&m0, &diag(&[1.0, 8.0])).unwrap();
    assert!(l.mat().max_abs_diff(&Tensor::diag(&[0.0, 4.0 * core::f64::consts::LN_2])) < 1e-13);
}

#[test]
fn distance_examples() {
    let m = diag(&[2.0, 3.0]);
    assert!(aim_distance(&m, &m).unwrap() < 1e-14);
    let e = core::f64::consts::E;
    let d = aim_distance(&SpdPoint::identity(2), &diag(&[e, e])).unwrap();
    assert!((d - core::f64::consts::SQRT_2).abs() < 1e-14);
}

#[test]
fn riemannian_grad_examples() {
    let m = diag(&[2.0, 1.0]);
    assert_eq!(spd_riemannian_grad(&m, &Tensor::zeros(&[2, 2])).unwrap().mat().max_abs(), 0.0);
    assert_eq!(spd_riemannian_grad(&m, &Tensor::eye(2)).unwrap().mat(), &Tensor::diag(&[4.0, 1.0]));
    let g = Tensor::matrix(2, 2, vec![1.0, 2.0, 0.0, 3.0]).unwrap();
    let r = spd_riemannian_grad(&SpdPoint::identity(2), &g).unwrap();
    assert_eq!(r.mat(), &linalg::sym(&g).unwrap());
    assert!(spd_riemannian_grad(&m, &Tensor::zeros(&[3, 3])).is_err());
}

#[test]
fn transport_examples() {
    let mut r = rng::stream(1, 0);
    let a = random_spd(&mut r, 3);
    let v = random_sym(&mut r, 3, 2.0);
    assert_eq!(spd_vector_transport(&a, &a, &v).unwrap(), v);
    let out = spd_vector_transport(&SpdPoint::identity(2), &diag(&[4.0, 4.0]), &SymTangent::new(Tensor::eye(2)).unwrap()).unwrap();
    assert!(out.mat().max_abs_diff(&Tensor::diag(&[4.0, 4.0])) < 1e-13);
}

#[test]
fn transport_is_linear_and_isometric() {
    let mut r = rng::stream(2, 0);
    let from = random_spd(&mut r, 4);
    let to = random_spd(&mut r, 4);
    let v1 = random_sym(&mut r, 4, 3.0);
    let v2 = random_sym(&mut r, 4, 3.0);
    let (a, b) = (0.7, -1.3);
    let combo = SymTangent::new(v1.mat().scale(a).add(&v2.mat().scale(b)).unwrap()).unwrap();
    let lhs = spd_vector_transport(&from, &to, &combo).unwrap();
    let t1 = spd_vector_transport(&from, &to, &v1).unwrap();
    let t2 = spd_vector_transport(&from, &to, &v2).unwrap();
    let rhs = t1.mat().scale(a).add(&t2.mat().scale(b)).unwrap();
    assert!(lhs.mat().max_abs_diff(&rhs) <= 1e-10 * rhs.max_abs());
    // ⟨v, v⟩_M = tr(M⁻¹ v M⁻¹ v) is preserved
    let inner = |m: &SpdPoint, v: &SymTangent| {
        let mi = linalg::inverse(m.mat()).unwrap();
        let x = mi.matmul(v.mat()).unwrap();
        let x2 = x.matmul(&x).unwrap();
        (0..m.n()).map(|i| x2.at(i, i)).sum::<f64>()
    };
    assert!((inner(&from, &v1) - inner(&to, &t1)).abs() < 1e-10 * inner(&from, &v1));
}

#[test]
fn biorth_examples() {
    let mut r = rng::stream(3, 0);
    let pair = BiorthogonalPair::random(5, 2, &mut r).unwrap();
    assert!(pair.residual() < 1e-14);
    assert_eq!(pair.phi(), pair.psi());
    let again = biorth_retract(pair.phi(), pair.psi()).unwrap();
    assert!(again.psi().max_abs_diff(pair.psi()) <= 1e-12);
    let phi = Tensor::matrix(2, 1, vec![1.0, 0.0]).unwrap();
    let psi = Tensor::matrix(2, 1, vec![2.0, 1.0]).unwrap();
    let p = biorth_retract(&phi, &psi).unwrap();
    assert_eq!(p.psi().data(), &[1.0, 0.5]);
    assert_eq!(p.phi(), &phi);
    assert!(p.residual() < 1e-15);
}

#[test]
fn biorth_rejects_near_singular_cross_gram() {
    let phi = Tensor::matrix(2, 1, vec![1.0, 0.0]).unwrap();
    let psi = Tensor::matrix(2, 1, vec![0.0, 1.0]).unwrap();
    assert!(matches!(biorth_retract(&phi, &psi), Err(geohnn_core::Error::RetractionFailed { .. })));
    let phi = Tensor::matrix(3, 2, vec![1.0, 1.0, 0.0, 1e-13, 0.0, 0.0]).unwrap();
    let psi = Tensor::matrix(3, 2, vec![1.0, 0.0, 0.0, 1.0, 0.0, 0.0]).unwrap();
    match biorth_retract(&phi, &psi) {
        Err(geohnn_core::Error::RetractionFailed { cond }) => assert!(cond >= 1e12),
        other => panic!("{other:?}"),
    }
}

#[test]
fn adam_zero_gradient_keeps_params() {
    let h = AdamHyper { lr: 0.1, ..AdamHyper::default() };
    let mut e = ManifoldParam::euclidean("w", Tensor::vector(&[1.0, -2.0]));
    riemannian_adam_step(&mut e, &[Tensor::zeros(&[2])], &h).unwrap();
    assert_eq!(e.tensors()[0].data(), &[1.0, -2.0]);
    let m0 = diag(&[2.0, 0.5]);
    let mut s = ManifoldParam::new("m", ParamValue::Spd(m0.clone()));
    riemannian_adam_step(&mut s, &[Tensor::zeros(&[2, 2])], &h).unwrap();
    assert!(s.tensors()[0].max_abs_diff(m0.mat()) < 1e-14);
}

#[test]
fn adam_first_euclidean_step() {
    let h = AdamHyper { lr: 0.1, beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay: 0.0 };
    let mut p = ManifoldParam::euclidean("x", Tensor::scalar(0.0));
    riemannian_adam_step(&mut p, &[Tensor::scalar(1.0)], &h).unwrap();
    assert!((p.tensors()[0].item() + 0.1).abs() < 1e-8);
}

#[test]
fn adam_decoupled_weight_decay() {
    let h = AdamHyper { lr: 0.1, weight_decay: 0.5, ..AdamHyper::default() };
    let mut p = ManifoldParam::euclidean("x", Tensor::scalar(2.0));
    riemannian_adam_step(&mut p, &[Tensor::scalar(0.0)], &h).unwrap();
    assert!((p.tensors()[0].item() - 2.0 * 0.95).abs() < 1e-15);
    // manifold parameters ignore weight decay
    let mut s = ManifoldParam::new("m", ParamValue::Spd(diag(&[3.0])));
    riemannian_adam_step(&mut s, &[Tensor::zeros(&[1, 1])], &h).unwrap();
    assert!((s.tensors()[0].item() - 3.0).abs() < 1e-14);
}

#[test]
fn adam_spd_converges_on_log_squared() {
    let h = AdamHyper { lr: 0.05, ..AdamHyper::default() };
    let mut p = ManifoldParam::new("m", ParamValue::Spd(diag(&[2.0])));
    for _ in 0..200 {
        let m = p.tensors()[0].item();
        let g = 2.0 * libm::log(m) / m;
        riemannian_adam_step(&mut p, &[Tensor::matrix(1, 1, vec![g]).unwrap()], &h).unwrap();
    }
    let m = p.tensors()[0].item();
    assert!((m - 1.0).abs() < 1e-3, "{m}");
}

#[test]
fn adam_shape_and_count_errors() {
    let h = AdamHyper::default();
    let mut p = ManifoldParam::new("b", ParamValue::Biorthogonal(BiorthogonalPair::identity(3, 2)));
    assert!(riemannian_adam_step(&mut p, &[Tensor::zeros(&[3, 2])], &h).is_err());
    assert!(riemannian_adam_step(&mut p, &[Tensor::zeros(&[3, 2]), Tensor::zeros(&[2, 3])], &h).is_err());
    assert_eq!(p.steps(), 0);
}

#[test]
fn biorth_stays_on_manifold_under_adam() {
    let mut r = rng::stream(4, 0);
    let target = rng::normal_tensor(&mut r, &[6, 3], 1.0);
    let mut p = ManifoldParam::new("b", ParamValue::Biorthogonal(BiorthogonalPair::random(6, 3, &mut r).unwrap()));
    let h = AdamHyper { lr: 1e-2, ..AdamHyper::default() };
    for _ in 0..300 {
        let ts = p.tensors();
        let g_phi = ts[0].sub(&target).unwrap().scale(2.0);
        let g_psi = ts[1].map(libm::sin);
        riemannian_adam_step(&mut p, &[g_phi, g_psi], &h).unwrap();
        p.check(1e-8).unwrap();
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn exp_log_round_trip(seed in any::<u64>(), n in 1usize..=8) {
        let mut r = rng::stream(seed, 0);
        let m0 = random_spd(&mut r, n);
        let xi = random_sym(&mut r, n, 5.0);
        let m = spd_exp(&m0, &xi).unwrap();
        prop_assert!(m.min_eigenvalue() > 0.0);
        let back = spd_log(&m0, &m).unwrap();
        prop_assert!(back.mat().max_abs_diff(xi.mat()) <= 1e-8 * xi.mat().max_abs().max(1.0));
        let m2 = spd_exp(&m0, &back).unwrap();
        prop_assert!(m2.mat().sub(m.mat()).unwrap().frobenius_norm() <= 1e-8 * m.mat().frobenius_norm());
    }

    #[test]
    fn distance_is_symmetric_and_congruence_invariant(seed in any::<u64>(), n in 1usize..=6) {
        let mut r = rng::stream(seed, 1);
        let a = random_spd(&mut r, n);
        let b = random_spd(&mut r, n);
        let d = aim_distance(&a, &b).unwrap();
        prop_assert!(d >= 0.0);
        prop_assert!((d - aim_distance(&b, &a).unwrap()).abs() <= 1e-10 * d.max(1.0));
        let p = rng::normal_tensor(&mut r, &[n, n], 1.0).add(&Tensor::eye(n).scale(2.0)).unwrap();
        prop_assume!(linalg::cond_estimate(&p) <= 100.0);
        let pt = p.transpose().unwrap();
        let ca = SpdPoint::from_symmetrized(&pt.matmul(a.mat()).unwrap().matmul(&p).unwrap()).unwrap();
        let cb = SpdPoint::from_symmetrized(&pt.matmul(b.mat()).unwrap().matmul(&p).unwrap()).unwrap();
        let dc = aim_distance(&ca, &cb).unwrap();
        prop_assert!((dc - d).abs() <= 1e-8 * d.max(1e-12));
    }

    #[test]
    fn biorth_retract_is_idempotent(seed in any::<u64>(), rows in 2usize..8) {
        let mut r = rng::stream(seed, 2);
        let cols = 1 + (seed as usize) % (rows - 1);
        let phi = rng::normal_tensor(&mut r, &[rows, cols], 1.0);
        let psi = phi.add(&rng::normal_tensor(&mut r, &[rows, cols], 0.3)).unwrap();
        let once = biorth_retract(&phi, &psi).unwrap();
        prop_assert!(once.residual() <= 1e-10);
        let twice = biorth_retract(once.phi(), once.psi()).unwrap();
        prop_assert!(twice.psi().max_abs_diff(once.psi()) <= 1e-12);
        prop_assert!(twice.phi() == once.phi());
    }

    #[test]
    fn biorth_tangent_projection_is_orthogonal(seed in any::<u64>(), rows in 2usize..8) {
        let mut r = rng::stream(seed, 3);
        let cols = 1 + (seed as usize) % (rows - 1);
        let phi = rng::normal_tensor(&mut r, &[rows, cols], 1.0);
        let psi = phi.add(&rng::normal_tensor(&mut r, &[rows, cols], 0.3)).unwrap();
        let pair = biorth_retract(&phi, &psi).unwrap();
        let gp = rng::normal_tensor(&mut r, &[rows, cols], 1.0);
        let gq = rng::normal_tensor(&mut r, &[rows, cols], 1.0);
        let (dp, dq) = biorth_tangent_projection(&pair, &gp, &gq).unwrap();
        let constraint = pair.psi().transpose().unwrap().matmul(&dp).unwrap()
            .add(&dq.transpose().unwrap().matmul(pair.phi()).unwrap()).unwrap();
        let scale = gp.frobenius_norm() + gq.frobenius_norm();
        prop_assert!(constraint.max_abs() <= 1e-10 * scale);
        let (dp2, dq2) = biorth_tangent_projection(&pair, &dp, &dq).unwrap();
        prop_assert!(dp2.max_abs_diff(&dp) <= 1e-10 * scale && dq2.max_abs_diff(&dq) <= 1e-10 * scale);
        let dot = |a: &Tensor, b: &Tensor| a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum::<f64>();
        let normal = dot(&gp.sub(&dp).unwrap(), &dp) + dot(&gq.sub(&dq).unwrap(), &dq);
        prop_assert!(normal.abs() <= 1e-9 * scale * scale);
        prop_assert!(dot(&gp, &dp) + dot(&gq, &dq) >= 0.0);
    }
}
