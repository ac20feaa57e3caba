use criterion::{criterion_group, criterion_main, Criterion};
use glab_core::circuits::{global_circuit, uniform_path, CircuitConfig, Radii};
use glab_core::model::{gibbs_state, ising_chain, tfim_chain, toric2d};
use glab_core::qcore::cmi;
use glab_core::recovery::twirled_petz;
use glab_core::stabilizer::{plaquette_loop, stab_expectation};
use glab_core::{Quadrature, StabilizerModel};
use std::hint::black_box;

fn gibbs(c: &mut Criterion) {
    let f = tfim_chain(8, false, 0.5, 1.0).unwrap();
    c.bench_function("gibbs_state tfim 8", |b| b.iter(|| gibbs_state(black_box(&f)).unwrap()));
    let rho = gibbs_state(&f).unwrap();
    c.bench_function("cmi tfim 8", |b| b.iter(|| cmi(&rho, &[0, 1], &[2, 3], &[4, 5, 6, 7]).unwrap()));
}

fn recovery(c: &mut Criterion) {
    let rho = gibbs_state(&tfim_chain(5, false, 0.5, 1.0).unwrap()).unwrap();
    let sigma = rho.marginal(&[1, 2, 3, 4]).unwrap();
    let mut g = c.benchmark_group("twirled_petz 4 sites");
    g.sample_size(10);
    g.bench_function("exact", |b| b.iter(|| twirled_petz(&sigma, &[1], &Quadrature::Exact).unwrap()));
    g.bench_function("trapezoid", |b| b.iter(|| twirled_petz(&sigma, &[1], &Quadrature::default()).unwrap()));
    g.finish();
}

fn circuit(c: &mut Criterion) {
    let f = ising_chain(5, false, 0.2, 0.5).unwrap();
    let path = uniform_path(&f.beta, &f.scaled(2.0).beta, 0.1).unwrap();
    let cfg = CircuitConfig::new(Radii { r_a: 1, r_1: 1, r_2: 1 });
    let mut g = c.benchmark_group("global_circuit");
    g.sample_size(10);
    g.bench_function("ising 5", |b| b.iter(|| global_circuit(&f, &path, &cfg).unwrap()));
    g.finish();
}

fn stabilizer(c: &mut Criterion) {
    let model = StabilizerModel::from_family(&toric2d(4, 1.0, 1.0, true).unwrap()).unwrap();
    let word = plaquette_loop(4, &[(0, 0), (0, 1), (1, 0), (1, 1)]);
    c.bench_function("stab_expectation toric 4x4", |b| b.iter(|| stab_expectation(&model, black_box(&word))));
}

criterion_group!(benches, gibbs, recovery, circuit, stabilizer);
criterion_main!(benches);
