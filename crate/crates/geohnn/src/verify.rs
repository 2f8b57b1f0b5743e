//! The deterministic property suite behind `geohnn verify`.

use geohnn_core::autodiff::{grad, Tape};
use geohnn_core::eval::{rollout, rom_rollout};
use geohnn_core::linalg;
use geohnn_core::manifolds::{
    aim_distance, biorth_retract, riemannian_adam_step, spd_exp, spd_log, AdamHyper, BiorthogonalPair, ManifoldParam,
    ParamValue, SpdPoint, SymTangent,
};
use geohnn_core::models::{
    Activation, AeConfig, Autoencoder, Bound, HamiltonianConfig, HamiltonianModel, InvertibleActivation, Mlp, ModelKind,
    ParamSet, Parameterized, ReducedOrderModel,
};
use geohnn_core::rng::{self, Stream};
use geohnn_core::systems::{PhaseState, SystemSpec};
use geohnn_core::training::{check_loss_gradient, symplectic_euler_step, DerivativeSamples, TrainConfig};
use geohnn_core::Tensor;

/// Largest relative energy error of symplectic Euler on the unit oscillator
/// from `(1, 0)` at `Δt = 0.1`, measured once by brute force (0.0526316).
pub const SYMPLECTIC_ENERGY_BOUND: f64 = 5.264e-2;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Fault {
    /// Double-head inertia with no identity margin and a head that outputs
    /// `−2I`, so the reconstructed inverse mass is `−I`.
    DoubleHeadSpd,
}

impl Fault {
    pub fn from_name(s: &str) -> Option<Self> {
        (s == "double-head-spd").then_some(Fault::DoubleHeadSpd)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Relation {
    AtMost,
    Above,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Outcome {
    pub name: &'static str,
    pub group: &'static str,
    pub measured: f64,
    pub relation: Relation,
    pub bound: f64,
}

impl Outcome {
    pub fn pass(&self) -> bool {
        match self.relation {
            Relation::AtMost => self.measured <= self.bound,
            Relation::Above => self.measured > self.bound,
        }
    }

    pub fn line(&self) -> String {
        let rel = match self.relation {
            Relation::AtMost => "<=",
            Relation::Above => ">",
        };
        let status = if self.pass() { "PASS" } else { "FAIL" };
        format!("{:<30} {:<5} {:>12.4e} {rel} {:.4e}", self.name, status, self.measured, self.bound)
    }
}

type Check = fn(Option<Fault>) -> geohnn_core::Result<f64>;

struct Property {
    name: &'static str,
    group: &'static str,
    relation: Relation,
    bound: f64,
    check: Check,
}

const PROPERTIES: [Property; 12] = [
    Property { name: "autodiff-first-order", group: "autodiff", relation: Relation::AtMost, bound: 1e-6, check: autodiff_first_order },
    Property { name: "autodiff-second-order", group: "autodiff", relation: Relation::AtMost, bound: 1e-4, check: autodiff_second_order },
    Property { name: "spd-exp-closure", group: "spd", relation: Relation::Above, bound: 0.0, check: spd_exp_closure },
    Property { name: "spd-log-exp-round-trip", group: "spd", relation: Relation::AtMost, bound: 1e-8, check: spd_round_trip },
    Property { name: "spd-congruence-invariance", group: "spd", relation: Relation::AtMost, bound: 1e-8, check: spd_congruence },
    Property { name: "spd-model-inertia", group: "spd", relation: Relation::Above, bound: 0.0, check: spd_model_inertia },
    Property { name: "biorth-persistence", group: "biorth", relation: Relation::AtMost, bound: 1e-8, check: biorth_persistence },
    Property { name: "point-projection", group: "autoencoder", relation: Relation::AtMost, bound: 1e-10, check: point_projection },
    Property { name: "vanilla-projection-violation", group: "autoencoder", relation: Relation::Above, bound: 1e-3, check: vanilla_violation },
    Property { name: "exact-reproduction", group: "reduction", relation: Relation::AtMost, bound: 1e-6, check: exact_reproduction },
    Property { name: "symplectic-energy-bound", group: "integrator", relation: Relation::AtMost, bound: SYMPLECTIC_ENERGY_BOUND, check: symplectic_energy },
    Property { name: "symplectic-no-secular-drift", group: "integrator", relation: Relation::AtMost, bound: 1.01, check: symplectic_drift_ratio },
];

pub fn names() -> Vec<(&'static str, &'static str)> {
    PROPERTIES.iter().map(|p| (p.name, p.group)).collect()
}

/// Runs every property whose name or group contains `filter`. Errors inside
/// a property count as failures with an infinite measurement.
pub fn run(filter: Option<&str>, fault: Option<Fault>) -> Vec<Outcome> {
    PROPERTIES
        .iter()
        .filter(|p| filter.is_none_or(|f| p.name.contains(f) || p.group.contains(f)))
        .map(|p| {
            let measured = match (p.check)(fault) {
                Ok(v) if !v.is_nan() => v,
                _ => match p.relation {
                    Relation::AtMost => f64::INFINITY,
                    Relation::Above => f64::NEG_INFINITY,
                },
            };
            Outcome { name: p.name, group: p.group, measured, relation: p.relation, bound: p.bound }
        })
        .collect()
}

pub fn table(outcomes: &[Outcome]) -> String {
    let mut s = format!("{:<30} {:<5} {:>12}    {}\n", "property", "status", "measured", "bound");
    for o in outcomes {
        s.push_str(&o.line());
        s.push('\n');
    }
    s
}

fn pick(r: &mut Stream, lo: usize, hi: usize) -> usize {
    lo + (rng::uniform(r, 0.0, (hi - lo + 1) as f64) as usize).min(hi - lo)
}

fn mlp_loss(mlp: &Mlp, tensors: &[Vec<Tensor>], x: &Tensor, tracked: bool) -> geohnn_core::Result<(Tape, Bound, f64, Vec<Tensor>)> {
    let tape = Tape::new();
    let b = Bound::from_tensors(&tape, tensors, tracked);
    let y = mlp.forward(&b, &tape.constant(x.clone()))?;
    let loss = y.square().sum().scale(0.5).add(&y.sin().sum())?;
    let value = loss.item();
    let grads = if tracked { grad(&loss, &b.flat())? } else { Vec::new() };
    Ok((tape, b, value, grads))
}

/// Parameter gradients of 100 random MLPs against five-point central
/// differences, as `max |a − n| / (|a| + 1e-6)`.
fn autodiff_first_order(_: Option<Fault>) -> geohnn_core::Result<f64> {
    let mut worst: f64 = 0.0;
    for i in 0..100 {
        let mut r = rng::stream(0xAD, i);
        let depth = pick(&mut r, 1, 3);
        let mut widths = vec![pick(&mut r, 1, 4)];
        widths.extend((0..depth).map(|_| pick(&mut r, 1, 6)));
        widths.push(pick(&mut r, 1, 3));
        let act = if i % 2 == 0 { Activation::Tanh } else { Activation::Softplus };
        let mut set = ParamSet::new();
        let mlp = Mlp::new(&mut set, "net", &widths, act, 1.0, &mut r)?;
        let rows = pick(&mut r, 1, 4);
        let x = rng::normal_tensor(&mut r, &[rows, widths[0]], 1.0);
        let base = set.tensors();
        let (_, _, _, analytic) = mlp_loss(&mlp, &base, &x, true)?;
        let h = 1e-3;
        for (j, a) in analytic.iter().enumerate() {
            for k in 0..a.len() {
                let at = |d: f64| {
                    let mut ts = base.clone();
                    ts[j][0].data_mut()[k] += d;
                    mlp_loss(&mlp, &ts, &x, false).map(|o| o.2)
                };
                let num = (-at(2.0 * h)? + 8.0 * at(h)? - 8.0 * at(-h)? + at(-2.0 * h)?) / (12.0 * h);
                let g = a.data()[k];
                worst = worst.max((g - num).abs() / (g.abs() + 1e-6));
            }
        }
    }
    Ok(worst)
}

/// Derivative-matching loss gradients through Hamilton's equations, every
/// model kind, on a two-sample batch.
fn autodiff_second_order(_: Option<Fault>) -> geohnn_core::Result<f64> {
    let mut r = rng::stream(0x5EC, 0);
    let mut t = || rng::normal_tensor(&mut r, &[2, 2], 1.0);
    let data = DerivativeSamples { q: t(), p: t(), qdot: t(), pdot: t() };
    let cfg = TrainConfig { reg_coeff: 1e-3, ..TrainConfig::default() };
    let mut worst: f64 = 0.0;
    for kind in ModelKind::ALL {
        let m = HamiltonianModel::new(&HamiltonianConfig::new(kind, 2).with_hidden(&[6, 5]).with_seed(3))?;
        worst = worst.max(check_loss_gradient(&m, &data, &cfg, 1e-4, 1e-6)?);
    }
    Ok(worst)
}

fn random_spd(r: &mut Stream, n: usize) -> geohnn_core::Result<SpdPoint> {
    let a = rng::normal_tensor(r, &[n, n], 1.0);
    let m = a.matmul(&a.transpose()?)?.scale(1.0 / n as f64).add(&Tensor::eye(n))?;
    SpdPoint::from_symmetrized(&m)
}

fn random_sym(r: &mut Stream, n: usize, max_norm: f64) -> geohnn_core::Result<SymTangent> {
    let a = linalg::sym(&rng::normal_tensor(r, &[n, n], 1.0))?;
    let s = rng::uniform(r, 0.0, max_norm) / a.frobenius_norm().max(1e-300);
    SymTangent::from_symmetrized(&a.scale(s))
}

const SPD_CORPUS: u64 = 10_000;

/// Each corpus entry: `n ∈ 1..=8`, `M₀ = AAᵀ/n + I`, `‖Ξ‖_F ≤ 5`.
fn spd_corpus(mut f: impl FnMut(&mut Stream, usize, &SpdPoint, &SymTangent) -> geohnn_core::Result<f64>) -> geohnn_core::Result<Vec<f64>> {
    (0..SPD_CORPUS)
        .map(|i| {
            let mut r = rng::stream(0x5BD, i);
            let n = pick(&mut r, 1, 8);
            let m0 = random_spd(&mut r, n)?;
            let xi = random_sym(&mut r, n, 5.0)?;
            f(&mut r, n, &m0, &xi)
        })
        .collect()
}

fn spd_exp_closure(_: Option<Fault>) -> geohnn_core::Result<f64> {
    let mins = spd_corpus(|_, _, m0, xi| linalg::min_eigenvalue(spd_exp(m0, xi)?.mat()))?;
    Ok(mins.into_iter().fold(f64::INFINITY, f64::min))
}

fn spd_round_trip(_: Option<Fault>) -> geohnn_core::Result<f64> {
    let errs = spd_corpus(|_, _, m0, xi| {
        let back = spd_log(m0, &spd_exp(m0, xi)?)?;
        Ok(back.mat().max_abs_diff(xi.mat()) / xi.mat().max_abs().max(1.0))
    })?;
    Ok(errs.into_iter().fold(0.0, f64::max))
}

/// `|d(PᵀAP, PᵀBP) − d(A, B)| / max(d, 1)` with `P = Q·diag(s)`, `s ∈ [½, 2]`.
fn spd_congruence(_: Option<Fault>) -> geohnn_core::Result<f64> {
    let errs = spd_corpus(|r, n, a, xi| {
        let b = spd_exp(a, xi)?;
        let (q, _) = linalg::qr(&rng::normal_tensor(r, &[n, n], 1.0))?;
        let s: Vec<f64> = (0..n).map(|_| rng::uniform(r, 0.5, 2.0)).collect();
        let p = q.matmul(&Tensor::diag(&s))?;
        let pt = p.transpose()?;
        let congr = |m: &SpdPoint| SpdPoint::from_symmetrized(&pt.matmul(m.mat())?.matmul(&p)?);
        let d = aim_distance(a, &b)?;
        let dc = aim_distance(&congr(a)?, &congr(&b)?)?;
        Ok((dc - d).abs() / d.max(1.0))
    })?;
    Ok(errs.into_iter().fold(0.0, f64::max))
}

/// Smallest eigenvalue of the reconstructed inverse mass of every structured
/// model at 1000 random configurations.
fn spd_model_inertia(fault: Option<Fault>) -> geohnn_core::Result<f64> {
    let n = 3;
    let mut r = rng::stream(0x1E7, 0);
    let q = rng::uniform_tensor(&mut r, &[1000, n], -2.0, 2.0);
    let mut worst = f64::INFINITY;
    for kind in [ModelKind::DoubleHeadHnn, ModelKind::CholeskyHnn, ModelKind::GeoHnn] {
        let mut m = HamiltonianModel::new(&HamiltonianConfig::new(kind, n).with_hidden(&[16, 16]).with_seed(9))?;
        if kind == ModelKind::DoubleHeadHnn && fault == Some(Fault::DoubleHeadSpd) {
            *m.eps_sym_mut() = 0.0;
            let net = m.arch().inertia_net().expect("double head has an inertia net").clone();
            let (w, b) = net.last_layer();
            let width = net.widths()[net.widths().len() - 2];
            let head = Tensor::eye(n).scale(-2.0).reshape(&[n * n])?;
            m.params_mut().set_value(w, ParamValue::Euclidean(Tensor::zeros(&[width, n * n])))?;
            m.params_mut().set_value(b, ParamValue::Euclidean(head))?;
        }
        let mats = m.inverse_mass_at(&q)?;
        for mat in mats.data().chunks(n * n) {
            let mat = Tensor::matrix(n, n, mat.to_vec())?;
            worst = worst.min(linalg::min_eigenvalue(&linalg::sym(&mat)?)?);
        }
    }
    Ok(worst)
}

/// Largest `‖ΨᵀΦ − I‖_F` over 1000 Riemannian Adam steps on a random loss.
fn biorth_persistence(_: Option<Fault>) -> geohnn_core::Result<f64> {
    let mut r = rng::stream(0xB10, 0);
    let target = rng::normal_tensor(&mut r, &[8, 3], 1.0);
    let mut p = ManifoldParam::new("pair", ParamValue::Biorthogonal(BiorthogonalPair::random(8, 3, &mut r)?));
    let hyper = AdamHyper { lr: 1e-2, ..AdamHyper::default() };
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let ts = p.tensors();
        let g_phi = ts[0].sub(&target)?.scale(2.0);
        let g_psi = ts[1].map(f64::sin);
        riemannian_adam_step(&mut p, &[g_phi, g_psi], &hyper)?;
        if let ParamValue::Biorthogonal(pair) = &p.value {
            worst = worst.max(pair.residual());
        }
    }
    Ok(worst)
}

/// `Φ, Ψ` pulled off their initial values and retracted back, biases
/// randomised.
fn perturbed_autoencoder(cfg: &AeConfig, seed: u64) -> geohnn_core::Result<(Autoencoder, ParamSet)> {
    let mut set = ParamSet::new();
    let mut r = rng::stream(seed, 0);
    let ae = Autoencoder::build(cfg, &mut set, "ae", &mut r)?;
    for i in 0..set.len() {
        let value = match &set.get(i).value {
            ParamValue::Biorthogonal(pair) => {
                let phi = pair.phi().add(&rng::normal_tensor(&mut r, pair.phi().shape(), 0.3))?;
                let psi = pair.psi().add(&rng::normal_tensor(&mut r, pair.psi().shape(), 0.3))?;
                ParamValue::Biorthogonal(biorth_retract(&phi, &psi)?)
            }
            ParamValue::Euclidean(t) => ParamValue::Euclidean(rng::normal_tensor(&mut r, t.shape(), 0.5)),
            ParamValue::Spd(_) => continue,
        };
        set.set_value(i, value)?;
    }
    Ok((ae, set))
}

fn latent_round_trip(ae: &Autoencoder, set: &ParamSet, seed: u64) -> geohnn_core::Result<f64> {
    let tape = Tape::new();
    let b = set.bind(&tape, false);
    let z = rng::normal_tensor(&mut rng::stream(seed, 1), &[16, ae.r()], 1.0);
    let back = ae.encode(&b, &ae.decode(&b, &tape.constant(z.clone()))?)?;
    Ok(back.value().max_abs_diff(&z) / z.max_abs().max(1.0))
}

const AE_SHAPES: [&[usize]; 3] = [&[8, 5, 2], &[12, 6, 3], &[6, 6]];

/// `encode ∘ decode` on latent points, constrained autoencoders at arbitrary
/// retracted parameters.
fn point_projection(_: Option<Fault>) -> geohnn_core::Result<f64> {
    let mut worst: f64 = 0.0;
    for (s, dims) in AE_SHAPES.iter().enumerate() {
        for seed in 0..10 {
            let (ae, set) = perturbed_autoencoder(&AeConfig::constrained(dims), 100 * s as u64 + seed)?;
            worst = worst.max(latent_round_trip(&ae, &set, seed)?);
        }
    }
    Ok(worst)
}

/// The same round trip for unconstrained autoencoders at initialisation.
fn vanilla_violation(_: Option<Fault>) -> geohnn_core::Result<f64> {
    let mut least = f64::INFINITY;
    for (s, dims) in AE_SHAPES[..2].iter().enumerate() {
        let mut set = ParamSet::new();
        let ae = Autoencoder::build(&AeConfig::vanilla(dims), &mut set, "ae", &mut rng::stream(s as u64, 0))?;
        least = least.min(latent_round_trip(&ae, &set, s as u64)?);
    }
    Ok(least)
}

/// A chain of four unit masses whose initial state lies in the span of its
/// two slowest normal modes, reduced by a linear constrained autoencoder
/// onto exactly that span. Largest state difference over 1000 steps.
fn exact_reproduction(_: Option<Fault>) -> geohnn_core::Result<f64> {
    let (n, r) = (4, 2);
    let system = SystemSpec::coupled_oscillators(n);
    let mode = |k: usize, j: usize| (2.0 / (n + 1) as f64).sqrt() * ((j * k) as f64 * std::f64::consts::PI / (n + 1) as f64).sin();
    let v = Tensor::matrix(n, r, (1..=n).flat_map(|j| (1..=r).map(move |k| mode(k, j))).collect())?;
    let mut cfg = AeConfig::constrained(&[n, r]);
    cfg.activation = InvertibleActivation::Identity;
    let mut rom = ReducedOrderModel::pullback(&cfg, system.clone(), 0)?;
    for i in 0..rom.params().len() {
        if let ParamValue::Biorthogonal(_) = rom.params().get(i).value {
            rom.params_mut().set_value(i, ParamValue::Biorthogonal(BiorthogonalPair::from_exact(v.clone(), v.clone(), 1e-12)?))?;
        }
    }
    let lift = |a: [f64; 2]| v.matmul(&Tensor::matrix(r, 1, a.to_vec()).expect("column")).expect("shapes").into_data();
    let s0 = PhaseState::new(lift([0.7, -0.3]), lift([0.1, 0.4]));
    let full = rollout(&system, &s0, 0.1, 1000)?;
    let reduced = rom_rollout(&rom, &s0, 0.1, 1000)?;
    if full.len() != 1001 || reduced.len() != 1001 {
        return Ok(f64::INFINITY);
    }
    Ok(full.states.max_abs_diff(&reduced.states))
}

fn energy_errors(dt: f64, steps: usize) -> geohnn_core::Result<Vec<f64>> {
    let spec = SystemSpec::mass_spring();
    let (mut q, mut p) = (Tensor::vector(&[1.0]), Tensor::vector(&[0.0]));
    let e0 = spec.true_hamiltonian(q.data(), p.data())?;
    (0..steps)
        .map(|_| {
            (q, p) = symplectic_euler_step(&spec, &q, &p, dt)?;
            Ok((spec.true_hamiltonian(q.data(), p.data())? - e0).abs() / e0)
        })
        .collect()
}

/// `max |ΔE| / E` over 10⁴ symplectic Euler steps of the unit oscillator.
pub fn symplectic_energy(_: Option<Fault>) -> geohnn_core::Result<f64> {
    Ok(energy_errors(0.1, 10_000)?.into_iter().fold(0.0, f64::max))
}

/// Largest energy error in the last tenth of the run over that in the first.
fn symplectic_drift_ratio(_: Option<Fault>) -> geohnn_core::Result<f64> {
    let e = energy_errors(0.1, 10_000)?;
    let tenth = e.len() / 10;
    let first = e[..tenth].iter().copied().fold(0.0, f64::max);
    let last = e[e.len() - tenth..].iter().copied().fold(0.0, f64::max);
    Ok(last / first)
}
