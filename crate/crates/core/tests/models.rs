use geohnn_core::autodiff::Tape;
use geohnn_core::linalg;
use geohnn_core::manifolds::{biorth_retract, BiorthogonalPair, ParamValue};
use geohnn_core::models::{
    AeConfig, Autoencoder, HamiltonianConfig, HamiltonianModel, InvertibleActivation, Mlp, ModelKind, ParamSet,
    Parameterized, ReducedOrderModel, DOUBLE_HEAD_EPS,
};
use geohnn_core::rng;
use geohnn_core::systems::{SystemSpec, VectorField};
use geohnn_core::tensor::Tensor;
use geohnn_core::Error;

fn small(kind: ModelKind, n: usize, seed: u64) -> HamiltonianModel {
    HamiltonianModel::new(&HamiltonianConfig::new(kind, n).with_hidden(&[16, 16]).with_seed(seed)).unwrap()
}

fn zero_output(model: &mut HamiltonianModel, net: &Mlp, bias: Option<Vec<f64>>) {
    let (w, b) = net.last_layer();
    let (wi, wo) = (net.widths()[net.widths().len() - 2], net.output_dim());
    let set = model.params_mut();
    set.set_value(w, ParamValue::Euclidean(Tensor::zeros(&[wi, wo]))).unwrap();
    let bias = bias.map(|v| Tensor::vector(&v)).unwrap_or_else(|| Tensor::zeros(&[wo]));
    set.set_value(b, ParamValue::Euclidean(bias)).unwrap();
}

fn random_states(n: usize, count: usize, seed: u64) -> Vec<(Vec<f64>, Vec<f64>)> {
    let mut r = rng::stream(seed, 0);
    (0..count)
        .map(|_| {
            let q = (0..n).map(|_| rng::uniform(&mut r, -1.5, 1.5)).collect();
            let p = (0..n).map(|_| rng::uniform(&mut r, -1.5, 1.5)).collect();
            (q, p)
        })
        .collect()
}

#[test]
fn geohnn_with_zero_heads_is_half_momentum_norm() {
    let mut m = small(ModelKind::GeoHnn, 3, 1);
    let pot = m.arch().potential_net().unwrap().clone();
    let inert = m.arch().inertia_net().unwrap().clone();
    zero_output(&mut m, &pot, None);
    zero_output(&mut m, &inert, None);
    let p = [0.3, -1.2, 2.0];
    let h = m.hamiltonian_eval(&[0.5, 0.1, -0.7], &p).unwrap();
    let want = 0.5 * p.iter().map(|x| x * x).sum::<f64>();
    assert!((h - want).abs() < 1e-14, "{h} vs {want}");
}

#[test]
fn geohnn_at_zero_momentum_is_the_potential() {
    let m = small(ModelKind::GeoHnn, 2, 2);
    let q = [0.4, -0.9];
    let h = m.hamiltonian_eval(&q, &[0.0, 0.0]).unwrap();
    let tape = Tape::new();
    let b = m.params().bind(&tape, false);
    let v = m.arch().potential_net().unwrap().forward(&b, &tape.constant(Tensor::matrix(1, 2, q.to_vec()).unwrap()));
    assert_eq!(h, v.unwrap().item());
}

#[test]
fn cholesky_diag_one_two() {
    let mut m = small(ModelKind::CholeskyHnn, 2, 3);
    let pot = m.arch().potential_net().unwrap().clone();
    let inert = m.arch().inertia_net().unwrap().clone();
    // raw value giving softplus(raw + ln(e-1)) + floor = target
    let raw = |t: f64| ((t - 1e-6).exp() - 1.0).ln() - (std::f64::consts::E - 1.0).ln();
    zero_output(&mut m, &pot, None);
    zero_output(&mut m, &inert, Some(vec![raw(1.0), raw(2.0), 0.0]));
    let h = m.hamiltonian_eval(&[0.2, 0.3], &[1.0, 1.0]).unwrap();
    assert!((h - 2.5).abs() < 1e-12, "{h}");
}

#[test]
fn baseline_mlp_has_no_hamiltonian() {
    let m = small(ModelKind::BaselineMlp, 1, 0);
    assert!(matches!(m.hamiltonian_eval(&[1.0], &[0.0]), Err(Error::Unsupported { .. })));
    let (qd, pd) = m.time_derivatives(&Tensor::vector(&[1.0]), &Tensor::vector(&[0.0])).unwrap();
    assert_eq!(qd.shape(), &[1]);
    assert_eq!(pd.shape(), &[1]);
}

#[test]
fn wrong_state_length_is_rejected() {
    let m = small(ModelKind::GeoHnn, 2, 0);
    assert!(matches!(m.hamiltonian_eval(&[1.0], &[0.0]), Err(Error::ShapeMismatch { .. })));
}

#[test]
fn true_mass_spring_field() {
    let s = SystemSpec::mass_spring();
    let (qd, pd) = s.time_derivatives(&Tensor::vector(&[1.0]), &Tensor::vector(&[0.0])).unwrap();
    assert_eq!((qd.data()[0], pd.data()[0]), (0.0, -1.0));
}

fn fd_grad(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    (0..x.len())
        .map(|i| {
            let at = |d: f64| {
                let mut y = x.to_vec();
                y[i] += d;
                f(&y)
            };
            (-at(2.0 * h) + 8.0 * at(h) - 8.0 * at(-h) + at(-2.0 * h)) / (12.0 * h)
        })
        .collect()
}

#[test]
fn time_derivatives_match_finite_differences() {
    for kind in [ModelKind::VanillaHnn, ModelKind::DoubleHeadHnn, ModelKind::CholeskyHnn, ModelKind::GeoHnn] {
        let n = 3;
        let m = small(kind, n, 7);
        for (q, p) in random_states(n, 10, 11) {
            let (qd, pd) = m.time_derivatives(&Tensor::vector(&q), &Tensor::vector(&p)).unwrap();
            let dh_dp = fd_grad(|x| m.hamiltonian_eval(&q, x).unwrap(), &p, 1e-4);
            let dh_dq = fd_grad(|x| m.hamiltonian_eval(x, &p).unwrap(), &q, 1e-4);
            for i in 0..n {
                let rel = |a: f64, b: f64| (a - b).abs() / (a.abs().max(b.abs()) + 1e-4);
                assert!(rel(qd.data()[i], dh_dp[i]) <= 1e-6, "{kind:?} q̇");
                assert!(rel(pd.data()[i], -dh_dq[i]) <= 1e-6, "{kind:?} ṗ");
            }
        }
    }
}

#[test]
fn symplectic_orthogonality() {
    let m = small(ModelKind::GeoHnn, 2, 5);
    for (q, p) in random_states(2, 20, 3) {
        let (qd, pd) = m.time_derivatives(&Tensor::vector(&q), &Tensor::vector(&p)).unwrap();
        // ∇H = (−ṗ, q̇)
        let s: f64 = (0..2).map(|i| qd.data()[i] * -pd.data()[i] + pd.data()[i] * qd.data()[i]).sum();
        assert!(s.abs() <= 1e-10);
    }
}

#[test]
fn batched_and_single_evaluation_agree() {
    let m = small(ModelKind::CholeskyHnn, 2, 9);
    let states = random_states(2, 5, 4);
    let q = Tensor::new(&[5, 2], states.iter().flat_map(|s| s.0.clone()).collect()).unwrap();
    let p = Tensor::new(&[5, 2], states.iter().flat_map(|s| s.1.clone()).collect()).unwrap();
    let e = m.energies(&q, &p).unwrap();
    let (qd, _) = m.time_derivatives(&q, &p).unwrap();
    for (i, (qi, pi)) in states.iter().enumerate() {
        assert!((e.data()[i] - m.hamiltonian_eval(qi, pi).unwrap()).abs() < 1e-13);
        let (qdi, _) = m.time_derivatives(&Tensor::vector(qi), &Tensor::vector(pi)).unwrap();
        assert!((qd.at(i, 0) - qdi.data()[0]).abs() < 1e-13);
    }
}

fn random_q_batch(n: usize, count: usize) -> Tensor {
    let mut r = rng::stream(99, 0);
    rng::uniform_tensor(&mut r, &[count, n], -3.0, 3.0)
}

fn inverse_masses(m: &HamiltonianModel, q: &Tensor) -> Vec<Tensor> {
    let n = m.config().dof;
    let minv = m.inverse_mass_at(q).unwrap();
    (0..q.rows()).map(|i| Tensor::new(&[n, n], minv.data()[i * n * n..(i + 1) * n * n].to_vec()).unwrap()).collect()
}

/// Scales the inertia head so that it produces large tangent vectors.
fn amplify_inertia(m: &mut HamiltonianModel, factor: f64) {
    let (w, b) = m.arch().inertia_net().unwrap().last_layer();
    for i in [w, b] {
        let t = match &m.params().get(i).value {
            ParamValue::Euclidean(t) => t.scale(factor),
            _ => unreachable!(),
        };
        m.params_mut().set_value(i, ParamValue::Euclidean(t)).unwrap();
    }
}

#[test]
fn geohnn_inverse_mass_is_spd_everywhere() {
    let mut m = small(ModelKind::GeoHnn, 3, 21);
    amplify_inertia(&mut m, 10.0);
    for mat in inverse_masses(&m, &random_q_batch(3, 1000)) {
        assert!(linalg::asymmetry(&mat) <= 1e-12);
        assert!(linalg::min_eigenvalue(&mat).unwrap() > 0.0);
    }
}

#[test]
fn cholesky_inverse_mass_is_spd_everywhere() {
    let mut m = small(ModelKind::CholeskyHnn, 3, 22);
    amplify_inertia(&mut m, 10.0);
    for mat in inverse_masses(&m, &random_q_batch(3, 1000)) {
        assert!(linalg::min_eigenvalue(&mat).unwrap() > 0.0);
    }
}

#[test]
fn double_head_is_symmetric_with_margin_at_init() {
    let m = small(ModelKind::DoubleHeadHnn, 3, 23);
    for mat in inverse_masses(&m, &random_q_batch(3, 1000)) {
        assert!(linalg::asymmetry(&mat) == 0.0);
        assert!(linalg::min_eigenvalue(&mat).unwrap() >= DOUBLE_HEAD_EPS - 1e-12);
    }
}

#[test]
fn double_head_can_leave_the_cone() {
    // ε = 0 and a head emitting −2I gives M⁻¹ = −I
    let mut m = small(ModelKind::DoubleHeadHnn, 2, 24);
    *m.eps_sym_mut() = 0.0;
    let inert = m.arch().inertia_net().unwrap().clone();
    zero_output(&mut m, &inert, Some(vec![-2.0, 0.0, 0.0, -2.0]));
    let mat = &inverse_masses(&m, &random_q_batch(2, 1))[0];
    assert!(linalg::min_eigenvalue(mat).unwrap() < 0.0);
}

#[test]
fn activation_round_trip_and_monotone() {
    let act = InvertibleActivation::default();
    let mut prev = f64::NEG_INFINITY;
    for i in 0..=20_000 {
        let x = -10.0 + 20.0 * i as f64 / 20_000.0;
        let y = act.forward(x);
        assert!(y > prev);
        prev = y;
        assert!((act.inverse(y) - x).abs() <= 1e-12, "x = {x}");
    }
}

fn build_ae(cfg: &AeConfig, seed: u64) -> (Autoencoder, ParamSet) {
    let mut set = ParamSet::new();
    let ae = Autoencoder::build(cfg, &mut set, "ae", &mut rng::stream(seed, 0)).unwrap();
    (ae, set)
}

fn perturb_pairs_and_biases(set: &mut ParamSet, seed: u64) {
    let mut r = rng::stream(seed, 1);
    for i in 0..set.len() {
        let value = match &set.get(i).value {
            ParamValue::Biorthogonal(pair) => {
                let shape = [pair.rows(), pair.cols()];
                let phi = pair.phi().add(&rng::normal_tensor(&mut r, &shape, 0.5)).unwrap();
                let psi = pair.psi().add(&rng::normal_tensor(&mut r, &shape, 0.5)).unwrap();
                ParamValue::Biorthogonal(biorth_retract(&phi, &psi).unwrap())
            }
            ParamValue::Euclidean(t) => ParamValue::Euclidean(rng::normal_tensor(&mut r, t.shape(), 1.0)),
            ParamValue::Spd(_) => unreachable!(),
        };
        set.set_value(i, value).unwrap();
    }
}

#[test]
fn constrained_encode_after_decode_is_identity() {
    let (ae, mut set) = build_ae(&AeConfig::constrained(&[12, 7, 3]), 5);
    perturb_pairs_and_biases(&mut set, 6);
    let tape = Tape::new();
    let b = set.bind(&tape, false);
    let z = rng::normal_tensor(&mut rng::stream(7, 0), &[50, 3], 2.0);
    let back = ae.encode(&b, &ae.decode(&b, &tape.constant(z.clone())).unwrap()).unwrap();
    assert!(back.value().max_abs_diff(&z) <= 1e-10);
}

#[test]
fn single_linear_layer_example() {
    let mut cfg = AeConfig::constrained(&[2, 1]);
    cfg.activation = InvertibleActivation::Identity;
    let (ae, mut set) = build_ae(&cfg, 0);
    let e1 = Tensor::matrix(2, 1, vec![1.0, 0.0]).unwrap();
    set.set_value(0, ParamValue::Biorthogonal(BiorthogonalPair::from_exact(e1.clone(), e1, 0.0).unwrap())).unwrap();
    let tape = Tape::new();
    let b = set.bind(&tape, false);
    let z = ae.encode(&b, &tape.constant(Tensor::matrix(1, 2, vec![3.0, 4.0]).unwrap())).unwrap();
    assert_eq!(z.value().data(), &[3.0]);
    let x = ae.decode(&b, &z).unwrap();
    assert_eq!(x.value().data(), &[3.0, 0.0]);
}

#[test]
fn orthonormal_linear_layer_is_exact_on_latents() {
    let mut cfg = AeConfig::constrained(&[5, 2]);
    cfg.activation = InvertibleActivation::Identity;
    let (ae, set) = build_ae(&cfg, 3);
    let tape = Tape::new();
    let b = set.bind(&tape, false);
    let z = Tensor::matrix(1, 2, vec![0.25, -0.5]).unwrap();
    let back = ae.encode(&b, &ae.decode(&b, &tape.constant(z.clone())).unwrap()).unwrap();
    assert!(back.value().max_abs_diff(&z) <= 1e-15);
}

#[test]
fn constrained_widths_must_not_grow() {
    let mut set = ParamSet::new();
    let r = Autoencoder::build(&AeConfig::constrained(&[4, 6]), &mut set, "ae", &mut rng::stream(0, 0));
    assert!(matches!(r, Err(Error::InvalidArgument(_))));
}

#[test]
fn autoencoder_rejects_wrong_width() {
    let (ae, set) = build_ae(&AeConfig::constrained(&[4, 2]), 0);
    let tape = Tape::new();
    let b = set.bind(&tape, false);
    assert!(matches!(ae.encode(&b, &tape.constant(Tensor::zeros(&[1, 3]))), Err(Error::ShapeMismatch { .. })));
    assert!(matches!(ae.decode(&b, &tape.constant(Tensor::zeros(&[1, 4]))), Err(Error::ShapeMismatch { .. })));
}

#[test]
fn vanilla_round_trip_is_not_exact() {
    let (ae, set) = build_ae(&AeConfig::vanilla(&[12, 8, 3]), 5);
    let tape = Tape::new();
    let b = set.bind(&tape, false);
    let z = rng::normal_tensor(&mut rng::stream(7, 0), &[50, 3], 1.0);
    let back = ae.encode(&b, &ae.decode(&b, &tape.constant(z.clone())).unwrap()).unwrap();
    assert!(back.value().max_abs_diff(&z) > 1e-3);
}

fn identity_rom() -> ReducedOrderModel {
    let mut cfg = AeConfig::constrained(&[1, 1]);
    cfg.activation = InvertibleActivation::Identity;
    let mut rom = ReducedOrderModel::pullback(&cfg, SystemSpec::mass_spring(), 0).unwrap();
    for i in 0..rom.params().len() {
        if let ParamValue::Biorthogonal(_) = rom.params().get(i).value {
            rom.params_mut().set_value(i, ParamValue::Biorthogonal(BiorthogonalPair::identity(1, 1))).unwrap();
        }
    }
    rom
}

#[test]
fn reduced_field_of_quadratic_latent_hamiltonian() {
    let rom = identity_rom();
    let (qd, pd) = rom.reduced_time_derivatives(&Tensor::vector(&[1.0]), &Tensor::vector(&[0.0])).unwrap();
    assert_eq!((qd.data()[0], pd.data()[0]), (0.0, -1.0));
    let (qd, pd) = rom.reduced_time_derivatives(&Tensor::vector(&[0.0]), &Tensor::vector(&[0.0])).unwrap();
    assert_eq!((qd.data()[0], pd.data()[0]), (0.0, 0.0));
}

#[test]
fn learned_rom_shapes_and_energy_conservation_under_rk4() {
    let cfg = geohnn_core::models::RomConfig::new(AeConfig::constrained(&[6, 4, 2]), &[8, 8], 3);
    let rom = ReducedOrderModel::new(&cfg).unwrap();
    let (qc, pc) = rom.encode_states(&Tensor::zeros(&[3, 6]), &Tensor::ones(&[3, 6])).unwrap();
    assert_eq!(qc.shape(), &[3, 2]);
    assert_eq!(pc.shape(), &[3, 2]);
    let (q, _) = rom.decode_states(&qc, &pc).unwrap();
    assert_eq!(q.shape(), &[3, 6]);

    let mut z = vec![0.3, -0.2, 0.5, 0.1];
    let field = |z: &[f64]| {
        let (a, b) = rom.reduced_time_derivatives(&Tensor::vector(&z[..2]), &Tensor::vector(&z[2..])).unwrap();
        [a.data(), b.data()].concat()
    };
    let energy = |z: &[f64]| rom.energies(&Tensor::vector(&z[..2]), &Tensor::vector(&z[2..])).unwrap().data()[0];
    let e0 = energy(&z);
    let h = 1e-3;
    for _ in 0..200 {
        let k1 = field(&z);
        let s = |k: &[f64], a: f64| z.iter().zip(k).map(|(z, k)| z + a * k).collect::<Vec<_>>();
        let k2 = field(&s(&k1, h / 2.0));
        let k3 = field(&s(&k2, h / 2.0));
        let k4 = field(&s(&k3, h));
        for i in 0..4 {
            z[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    assert!((energy(&z) - e0).abs() <= 1e-8 * e0.abs().max(1.0));
}

#[test]
fn parameter_counts() {
    let m = small(ModelKind::GeoHnn, 2, 0);
    let expected_mlp = |w: &[usize]| w.windows(2).map(|w| w[0] * w[1] + w[1]).sum::<usize>();
    let want = expected_mlp(&[2, 16, 16, 1]) + expected_mlp(&[2, 16, 16, 3]) + 4;
    assert_eq!(m.params().num_scalars(), want);
    assert!(m.params().has_manifold_params());
    assert!(!small(ModelKind::CholeskyHnn, 2, 0).params().has_manifold_params());
}
