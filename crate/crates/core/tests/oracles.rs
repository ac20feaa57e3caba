//! Closed-form and brute-force checks of the core numerics.

use glab_core::correlations::{covariance, CovarianceConfig};
use glab_core::lindblad::heatbath_generator;
use glab_core::model::{gibbs_state, ising_chain, Term};
use glab_core::qcore::linalg::{self, c, pauli_string};
use glab_core::qcore::{cmi, fidelity, induced_trace_norm, matrix_function, AffineGate, MatFn, NormAscent};
use glab_core::{ChannelGate, DenseOperator, DenseState, GateKind, InteractionFamily, Lattice, Mat, Restriction, C64};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn ket(amps: &[f64]) -> Vec<C64> {
    amps.iter().map(|&a| c(a)).collect()
}

fn ghz3() -> DenseState {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let mut a = vec![0.0; 8];
    a[0] = h;
    a[7] = h;
    DenseState::pure(&ket(&a), &[0, 1, 2]).unwrap()
}

fn bell() -> DenseState {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    DenseState::pure(&ket(&[h, 0.0, 0.0, h]), &[0, 1]).unwrap()
}

#[test]
fn single_qubit_gibbs_weights() {
    let lat = Lattice::chain(1, false).unwrap();
    let t = Term { support: vec![0], h: pauli_string("Z"), name: "Z".into() };
    let f = InteractionFamily::new(lat, vec![t], vec![1.0], "one").unwrap();
    let rho = gibbs_state(&f).unwrap();
    let z = 2.0 * 1f64.cosh();
    assert!((rho.mat()[(0, 0)].re - (-1f64).exp() / z).abs() < 1e-12);
    assert!((rho.mat()[(1, 1)].re - 1f64.exp() / z).abs() < 1e-12);
    assert!((rho.mat()[(1, 1)].re - 0.8808).abs() < 1e-4);
}

#[test]
fn two_site_ising_partition_function() {
    let rho = gibbs_state(&ising_chain(2, false, 1.0, 0.0).unwrap()).unwrap();
    let e = 1f64.exp();
    let aligned = e / (2.0 * e + 2.0 / e);
    for (i, w) in [aligned, 1.0 / e / (2.0 * e + 2.0 / e), 1.0 / e / (2.0 * e + 2.0 / e), aligned].iter().enumerate() {
        assert!((rho.mat()[(i, i)].re - w).abs() < 1e-12);
    }
}

/// Brute-force sum over spin configurations.
fn classical_zz(n: usize, beta: f64, field: f64, i: usize, j: usize) -> f64 {
    let (mut z, mut zi, mut zj, mut zij) = (0.0, 0.0, 0.0, 0.0);
    for cfg in 0..1usize << n {
        let s: Vec<f64> = (0..n).map(|p| if cfg >> (n - 1 - p) & 1 == 0 { 1.0 } else { -1.0 }).collect();
        let energy: f64 = -(0..n - 1).map(|p| s[p] * s[p + 1]).sum::<f64>() - field * s.iter().sum::<f64>();
        let w = (-beta * energy).exp();
        z += w;
        zi += w * s[i];
        zj += w * s[j];
        zij += w * s[i] * s[j];
    }
    (zij / z - zi * zj / (z * z)).abs()
}

#[test]
fn ising_covariance_matches_enumeration() {
    let (n, beta, field) = (6, 0.4, 0.3);
    let f = ising_chain(n, false, beta, field).unwrap();
    let rho = gibbs_state(&f).unwrap();
    for (i, j) in [(1, 2), (1, 4), (0, 5)] {
        let est = covariance(&rho, &[i], &[j], Restriction::Algebra, Some(&f), &CovarianceConfig::default()).unwrap();
        let exact = classical_zz(n, beta, field, i, j);
        assert!((est.lower - exact).abs() < 1e-6, "({i},{j}): {} vs {exact}", est.lower);
        assert!(est.upper >= exact - 1e-9);
    }
}

#[test]
fn bell_covariance_saturates() {
    let est = covariance(&bell(), &[0], &[1], Restriction::Full, None, &CovarianceConfig::default()).unwrap();
    assert!(est.lower >= 1.0 - 1e-6);
}

#[test]
fn ghz_marginal_and_cmi() {
    let g = ghz3();
    let m = g.marginal(&[0, 1]).unwrap();
    let mut want = Mat::zeros(4, 4);
    want[(0, 0)] = c(0.5);
    want[(3, 3)] = c(0.5);
    assert!((m.mat() - want).norm() < 1e-12);
    assert!((cmi(&g, &[0], &[1], &[2]).unwrap() - 1.0).abs() < 1e-10);
}

#[test]
fn trace_distance_and_fidelity_of_zero_and_plus() {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let zero = DenseState::pure(&ket(&[1.0, 0.0]), &[0]).unwrap();
    let plus = DenseState::pure(&ket(&[h, h]), &[0]).unwrap();
    assert!((zero.trace_distance(&plus).unwrap() - 2f64.sqrt()).abs() < 1e-12);
    assert!((fidelity(&zero, &plus).unwrap() - h).abs() < 1e-10);
}

#[test]
fn square_root_squares_back() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let rho = linalg::random_density(&mut rng, 4);
    let s = matrix_function(&rho, MatFn::Power(0.5), 0.0).unwrap();
    assert!((&s * &s - &rho).norm() < 1e-10);
}

#[test]
fn reset_on_bell_pair() {
    let mut zero = Mat::zeros(2, 2);
    zero[(0, 0)] = c(1.0);
    let gate = ChannelGate::replacement(vec![0], &zero, GateKind::Custom).unwrap();
    let out = gate.apply(&bell()).unwrap();
    let want = DenseOperator::new(linalg::kron(&zero, &linalg::identity(2).unscale(2.0)), vec![0, 1]).unwrap();
    assert!(out.op.sub(&want.reorder(out.labels()).unwrap()).unwrap().trace_norm() < 1e-12);
}

#[test]
fn depolarizer_minus_identity_norm() {
    let gate = ChannelGate::depolarizer(vec![0]);
    let map = AffineGate { gate: &gate, a: 1.0, b: -1.0 };
    let v = induced_trace_norm(&map, NormAscent::default(), &mut ChaCha8Rng::seed_from_u64(1));
    assert!((1.0 - 1e-12..=2.0 + 1e-12).contains(&v));
}

#[test]
fn heatbath_relaxes_to_gibbs() {
    let f = ising_chain(6, false, 0.5, 0.2).unwrap();
    let rho = gibbs_state(&f).unwrap();
    let gen = heatbath_generator(&f, 0).unwrap();
    let labels: Vec<usize> = (0..6).collect();
    let mut amps = vec![0.0; 64];
    amps[0] = 1.0;
    let start = DenseState::pure(&ket(&amps), &labels).unwrap();
    let late = gen.evolve(&start.op, 120.0).unwrap();
    let zz = DenseOperator::new(pauli_string("ZZ"), vec![2, 3]).unwrap().embed(&labels).unwrap();
    let z = DenseOperator::new(pauli_string("Z"), vec![0]).unwrap().embed(&labels).unwrap();
    for o in [zz, z] {
        let got = late.expectation(&o).unwrap().re;
        let want = rho.op.expectation(&o).unwrap().re;
        assert!((got - want).abs() < 1e-4, "{got} vs {want}");
    }
}
