//! Property tests for structural invariants.

use glab_core::circuits::{global_circuit, lr_audit, uniform_path, CircuitConfig, Radii};
use glab_core::lindblad::{appendix_i_dense, random_lindbladian};
use glab_core::model::{block_partition, gibbs_state, ising_chain, tfim_chain};
use glab_core::qcore::info::{cmi, fidelity};
use glab_core::qcore::linalg::{self, mul};
use glab_core::qcore::operator::STATE_TOL;
use glab_core::recovery::twirled_petz;
use glab_core::stabilizer::{dense_expectation, random_word, stab_expectation};
use glab_core::{DenseOperator, DenseState, Lattice, PauliWord, Quadrature, StabilizerModel};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn random_state(seed: u64, n: usize) -> DenseState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = linalg::random_density(&mut rng, 1 << n);
    DenseState::certify(DenseOperator::new(m, (0..n).collect()).unwrap(), STATE_TOL).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn cmi_is_nonnegative(seed in any::<u64>()) {
        let rho = random_state(seed, 3);
        prop_assert!(cmi(&rho, &[0], &[1], &[2]).unwrap() >= 0.0);
    }

    #[test]
    fn twirled_petz_is_cptp_and_obeys_fidelity_bound(seed in any::<u64>()) {
        let rho = random_state(seed, 3);
        let map = twirled_petz(&rho.marginal(&[1, 2]).unwrap(), &[2], &Quadrature::default()).unwrap();
        prop_assert!(map.gate.certify().is_ok());
        let out = map.apply(&rho.marginal(&[0, 1]).unwrap()).unwrap();
        let i = cmi(&rho, &[0], &[1], &[2]).unwrap();
        prop_assert!(-2.0 * fidelity(&rho, &out).unwrap().log2() <= i + 1e-6);
    }

    #[test]
    fn trace_distance_is_a_metric(a in any::<u64>(), b in any::<u64>(), c in any::<u64>()) {
        let (x, y, z) = (random_state(a, 2), random_state(b, 2), random_state(c, 2));
        let xy = x.trace_distance(&y).unwrap();
        prop_assert!((xy - y.trace_distance(&x).unwrap()).abs() < 1e-12);
        prop_assert!(xy <= x.trace_distance(&z).unwrap() + z.trace_distance(&y).unwrap() + 1e-12);
        prop_assert!(xy <= 2.0 + 1e-12);
    }

    #[test]
    fn block_layers_are_separated_and_cover(n in 4usize..12, r_a in 1usize..3, periodic in any::<bool>()) {
        let fam = ising_chain(n, periodic, 0.5, 0.2).unwrap();
        let part = block_partition(&fam.lattice, &fam, r_a).unwrap();
        let sep = 2 * (r_a + 2);
        let layers = part.layers(&fam.lattice, sep);
        let mut seen: Vec<usize> = layers.iter().flatten().copied().collect();
        seen.sort_unstable();
        prop_assert_eq!(seen, (0..part.blocks.len()).collect::<Vec<_>>());
        for layer in &layers {
            for (i, &x) in layer.iter().enumerate() {
                for &y in &layer[i + 1..] {
                    prop_assert!(fam.lattice.distance(part.centers[x], part.centers[y]) >= sep);
                }
            }
        }
        for (k, &x) in part.assignment.iter().enumerate() {
            prop_assert!(part.blocks[x].contains_all(&fam.terms[k].support));
        }
    }

    #[test]
    fn uniform_path_steps_are_bounded(start in prop::collection::vec(0.0f64..1.0, 1..6), shift in -1.0f64..1.0, delta in 0.05f64..0.5) {
        let end: Vec<f64> = start.iter().enumerate().map(|(k, b)| b + shift * (k as f64 + 1.0) / start.len() as f64).collect();
        let path = uniform_path(&start, &end, delta).unwrap();
        prop_assert_eq!(path.first().unwrap(), &start);
        for (a, b) in path.last().unwrap().iter().zip(&end) {
            prop_assert!((a - b).abs() < 1e-12);
        }
        for w in path.windows(2) {
            let step = w[0].iter().zip(&w[1]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            prop_assert!(step <= delta + 1e-12);
        }
    }

    #[test]
    fn pauli_algebra_matches_dense(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (p, q) = (random_word(&mut rng, 3), random_word(&mut rng, 3));
        let labels = [0, 1, 2];
        let (dp, dq) = (p.to_dense(&labels).unwrap(), q.to_dense(&labels).unwrap());
        let prod = p.mul(&q).to_dense(&labels).unwrap();
        prop_assert!((&prod - mul(&dp, &dq)).norm() < 1e-12);
        let comm = (mul(&dp, &dq) - mul(&dq, &dp)).norm() < 1e-12;
        prop_assert_eq!(comm, p.commutes_with(&q));
    }

    #[test]
    fn trace_bound_holds(seed in any::<u64>(), t in 0.0f64..4.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let l = random_lindbladian(&mut rng, 2, 2);
        let rho = linalg::random_density(&mut rng, 4);
        prop_assert!(appendix_i_dense(&l, &rho, t).holds(1e-8));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn stabilizer_engine_matches_dense(betas in prop::collection::vec(-1.5f64..1.5, 6), seed in any::<u64>()) {
        let mut fam = glab_core::model::toric2d(2, 1.0, 1.0, true).unwrap();
        fam.beta = betas;
        let model = StabilizerModel::from_family(&fam).unwrap();
        let rho = gibbs_state(&fam).unwrap();
        let labels = rho.labels().to_vec();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut words: Vec<PauliWord> = (0..10).map(|_| random_word(&mut rng, 8)).collect();
        words.push(model.product(&[0, 2, 4]));
        for w in &words {
            let exact = stab_expectation(&model, w).value();
            let dense = dense_expectation(rho.mat(), &labels, w).unwrap();
            prop_assert!((exact - dense).norm() < 1e-10);
        }
    }

    #[test]
    fn global_circuit_telescopes(b0 in 0.1f64..0.4, db in -0.2f64..0.2, field in 0.0f64..1.0, transverse in any::<bool>()) {
        let fam = if transverse { tfim_chain(5, false, b0, field).unwrap() } else { ising_chain(5, false, b0, field).unwrap() };
        let end: Vec<f64> = fam.beta.iter().map(|b| b + db).collect();
        let cfg = CircuitConfig::new(Radii::new(1, 1, 1));
        let path = uniform_path(&fam.beta, &end, cfg.delta).unwrap();
        let (c, ledger) = global_circuit(&fam, &path, &cfg).unwrap();
        prop_assert!(ledger.telescoping_holds());
        prop_assert!(ledger.global_error <= ledger.telescoped_bound + 1e-8);
        for layer in &c.layers {
            for (i, g) in layer.iter().enumerate() {
                for h in &layer[i + 1..] {
                    prop_assert!(g.support.iter().all(|s| !h.support.contains(s)));
                }
            }
        }
        let lr = lr_audit(&c, &gibbs_state(&fam).unwrap()).unwrap();
        prop_assert!(lr.reversal_bound_holds(1e-8));
    }
}

#[test]
fn lattice_distance_is_symmetric() {
    let lat = Lattice::new(2, &[3, 4], &[true, false]).unwrap();
    for a in lat.sites() {
        for b in lat.sites() {
            assert_eq!(lat.distance(a, b), lat.distance(b, a));
        }
    }
}
