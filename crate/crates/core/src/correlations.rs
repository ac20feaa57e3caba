//! Covariance bounds, clustering fits and stable-clustering probes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Uniform};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{GlabError, Result};
use crate::model::{gibbs_state, local_algebra, AnnulusPartition, InteractionFamily, LocalAlgebra};
use crate::qcore::linalg::{self, Mat, ZERO};
use crate::qcore::operator::DenseState;

/// Which operators enter the supremum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Restriction {
    Full,
    Algebra,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CovarianceEstimate {
    pub lower: f64,
    pub upper: f64,
    pub restriction: Restriction,
    #[serde(skip)]
    pub witness_x: Mat,
    #[serde(skip)]
    pub witness_y: Mat,
    /// Largest distance of a witness from its algebra.
    pub witness_residual: f64,
    /// Objective never decreased along any alternating run.
    pub monotone: bool,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CovarianceConfig {
    pub restarts: usize,
    pub max_iterations: usize,
    pub tolerance: f64,
    pub seed: u64,
}

impl Default for CovarianceConfig {
    fn default() -> Self {
        Self { restarts: 8, max_iterations: 200, tolerance: 1e-12, seed: 0 }
    }
}

/// Apply `P` to the left tensor factor of `m` on `(dx · dy)`.
fn project_left(alg: &LocalAlgebra, m: &Mat, dx: usize, dy: usize) -> Mat {
    let mut out = Mat::zeros(dx * dy, dx * dy);
    for c in 0..dy {
        for cp in 0..dy {
            let block = Mat::from_fn(dx, dx, |a, ap| m[(a * dy + c, ap * dy + cp)]);
            let pb = alg.project(&block);
            for a in 0..dx {
                for ap in 0..dx {
                    out[(a * dy + c, ap * dy + cp)] = pb[(a, ap)];
                }
            }
        }
    }
    out
}

fn project_right(alg: &LocalAlgebra, m: &Mat, dx: usize, dy: usize) -> Mat {
    let mut out = Mat::zeros(dx * dy, dx * dy);
    for a in 0..dx {
        for ap in 0..dx {
            let block = m.view((a * dy, ap * dy), (dy, dy)).into_owned();
            out.view_mut((a * dy, ap * dy), (dy, dy)).copy_from(&alg.project(&block));
        }
    }
    out
}

/// `(P_X ⊗ P_Y)(m)`.
pub fn project_product(ax: &LocalAlgebra, ay: &LocalAlgebra, m: &Mat) -> Mat {
    let dx = 1usize << ax.region.len();
    let dy = 1usize << ay.region.len();
    let left = if ax.is_full() { m.clone() } else { project_left(ax, m, dx, dy) };
    if ay.is_full() {
        left
    } else {
        project_right(ay, &left, dx, dy)
    }
}

/// `Tr_Y(Δ (I ⊗ O))`.
fn contract_right(delta: &Mat, o: &Mat, dx: usize, dy: usize) -> Mat {
    Mat::from_fn(dx, dx, |a, ap| {
        let mut acc = ZERO;
        for c in 0..dy {
            for cp in 0..dy {
                acc += delta[(a * dy + c, ap * dy + cp)] * o[(cp, c)];
            }
        }
        acc
    })
}

/// `Tr_X(Δ (O ⊗ I))`.
fn contract_left(delta: &Mat, o: &Mat, dx: usize, dy: usize) -> Mat {
    let mut out = Mat::zeros(dy, dy);
    for a in 0..dx {
        for ap in 0..dx {
            let w = o[(ap, a)];
            if w == ZERO {
                continue;
            }
            out += delta.view((a * dy, ap * dy), (dy, dy)) * w;
        }
    }
    out
}

/// Partial isometry of the polar decomposition and `‖m‖_1`: the maximiser
/// of `|Tr(O m)|` over `‖O‖ ≤ 1`.
fn polar_witness(m: &Mat) -> (Mat, f64) {
    let svd = m.clone().svd(true, true);
    let u = svd.u.expect("u");
    let vt = svd.v_t.expect("v_t");
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let mut o = Mat::zeros(m.ncols(), m.nrows());
    let mut total = 0.0;
    for (i, &s) in svd.singular_values.iter().enumerate() {
        total += s;
        if s > 1e-13 * smax.max(1e-300) {
            o += vt.row(i).adjoint() * u.column(i).adjoint();
        }
    }
    (o, total)
}

fn random_in_algebra<R: Rng + ?Sized>(alg: &LocalAlgebra, rng: &mut R) -> Mat {
    let d = 1usize << alg.region.len();
    let g = alg.project(&linalg::random_normal_matrix(rng, d, d));
    let n = linalg::op_norm(&g);
    if n > 0.0 {
        g.unscale(n)
    } else {
        linalg::identity(d)
    }
}

/// Covariance bounds for explicit algebras `A_X`, `A_Y`.
///
/// The lower bound alternates exact maximisations: with `O_2` fixed the best
/// `O_1` is the polar part of `P_X Tr_Y(Δ(I ⊗ O_2))`, and symmetrically. The
/// upper bound is `‖(P_X ⊗ P_Y) Δ‖_1` with `Δ = ρ_XY − ρ_X ⊗ ρ_Y`.
pub fn covariance_with_algebras(
    state: &DenseState,
    ax: &LocalAlgebra,
    ay: &LocalAlgebra,
    restriction: Restriction,
    cfg: &CovarianceConfig,
) -> Result<CovarianceEstimate> {
    let x = &ax.region;
    let y = &ay.region;
    if x.iter().any(|s| y.contains(s)) {
        return Err(GlabError::Partition("covariance regions overlap".into()));
    }
    let (dx, dy) = (1usize << x.len(), 1usize << y.len());
    let mut xy = x.clone();
    xy.extend_from_slice(y);
    let rxy = state.marginal(&xy)?;
    let rx = state.marginal(x)?;
    let ry = state.marginal(y)?;
    let raw = rxy.mat() - linalg::kron(rx.mat(), ry.mat());
    let delta = project_product(ax, ay, &raw);
    let upper = linalg::trace_norm(&linalg::hermitize(&delta));

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut best = (0.0f64, linalg::identity(dx), linalg::identity(dy));
    let mut monotone = true;
    if upper > 0.0 {
        for _ in 0..cfg.restarts.max(1) {
            let mut o2 = random_in_algebra(ay, &mut rng);
            let mut o1;
            let mut prev: f64 = -1.0;
            let mut it = 0;
            loop {
                let m1 = ax.project(&contract_right(&delta, &o2, dx, dy));
                let (w1, v1) = polar_witness(&m1);
                o1 = w1;
                if v1 < prev - 1e-10 * prev.max(1.0) {
                    monotone = false;
                }
                let m2 = ay.project(&contract_left(&delta, &o1, dx, dy));
                let (w2, v2) = polar_witness(&m2);
                if v2 < v1 - 1e-10 * v1.max(1.0) {
                    monotone = false;
                }
                o2 = w2;
                it += 1;
                let done = v2 - prev.max(0.0) <= cfg.tolerance || it >= cfg.max_iterations;
                prev = v2;
                if done {
                    break;
                }
            }
            // Honest evaluation of the final pair on the unprojected state.
            let o = linalg::kron(&o1, &o2);
            let val = linalg::trace(&linalg::mul(&raw, &o)).norm();
            if val > best.0 {
                best = (val, o1, o2);
            }
        }
    }
    let residual = ax.residual(&best.1).max(ay.residual(&best.2));
    Ok(CovarianceEstimate {
        lower: best.0,
        upper,
        restriction,
        witness_x: best.1,
        witness_y: best.2,
        witness_residual: residual,
        monotone,
    })
}

/// `Cov^A_ρ(X, Y)` bounds; the algebra restriction uses the family's local
/// algebras.
pub fn covariance(
    state: &DenseState,
    x: &[usize],
    y: &[usize],
    restriction: Restriction,
    family: Option<&InteractionFamily>,
    cfg: &CovarianceConfig,
) -> Result<CovarianceEstimate> {
    let (ax, ay) = match (restriction, family) {
        (Restriction::Full, _) => (LocalAlgebra::full(x), LocalAlgebra::full(y)),
        (Restriction::Algebra, Some(f)) => (local_algebra(f, x)?, local_algebra(f, y)?),
        (Restriction::Algebra, None) => {
            return Err(GlabError::Config("algebra restriction needs an interaction family".into()))
        }
    };
    covariance_with_algebras(state, &ax, &ay, restriction, cfg)
}

/// Evaluates `|⟨O_1 O_2⟩ − ⟨O_1⟩⟨O_2⟩|` for explicit operators on `X`, `Y`.
pub fn connected_correlator(state: &DenseState, x: &[usize], o1: &Mat, y: &[usize], o2: &Mat) -> Result<f64> {
    let mut xy = x.to_vec();
    xy.extend_from_slice(y);
    let rxy = state.marginal(&xy)?;
    let rx = state.marginal(x)?;
    let ry = state.marginal(y)?;
    let both = linalg::trace(&linalg::mul(rxy.mat(), &linalg::kron(o1, o2)));
    let a = linalg::trace(&linalg::mul(rx.mat(), o1));
    let b = linalg::trace(&linalg::mul(ry.mat(), o2));
    Ok((both - a * b).norm())
}

/// Below this a covariance counts as numerically zero.
pub const COV_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClusteringSample {
    pub separation: usize,
    pub lower: f64,
    pub upper: f64,
    pub restriction: Restriction,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClusteringFit {
    pub samples: Vec<ClusteringSample>,
    /// Correlation length; infinite when the fitted slope is not negative.
    pub xi: f64,
    pub log_prefactor: f64,
    pub r_squared: f64,
    /// Every covariance was below `COV_FLOOR`; no fit was made.
    pub below_floor: bool,
    /// Fits use the covariance lower bounds.
    pub fitted_on: String,
}

impl ClusteringFit {
    pub fn accepted(&self) -> bool {
        !self.below_floor && self.xi.is_finite() && self.xi > 0.0
    }
}

/// Least squares `y = a + b x`; returns `(a, b, R²)`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    if sxx == 0.0 {
        return (my, 0.0, 0.0);
    }
    let b = sxy / sxx;
    let a = my - b * mx;
    let r2 = if syy == 0.0 { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    (a, b, r2)
}

pub fn fit_samples(samples: Vec<ClusteringSample>) -> ClusteringFit {
    let usable: Vec<&ClusteringSample> = samples.iter().filter(|s| s.lower > COV_FLOOR).collect();
    if usable.len() < 2 {
        return ClusteringFit {
            samples,
            xi: f64::NAN,
            log_prefactor: f64::NAN,
            r_squared: f64::NAN,
            below_floor: true,
            fitted_on: "lower".into(),
        };
    }
    let xs: Vec<f64> = usable.iter().map(|s| s.separation as f64).collect();
    let ys: Vec<f64> = usable.iter().map(|s| s.lower.ln()).collect();
    let (a, b, r2) = linear_fit(&xs, &ys);
    let xi = if b < 0.0 { -1.0 / b } else { f64::INFINITY };
    ClusteringFit { samples, xi, log_prefactor: a, r_squared: r2, below_floor: false, fitted_on: "lower".into() }
}

/// Covariance `Cov^A(A, C)` across each partition and an exponential fit.
pub fn clustering_scan(
    family: &InteractionFamily,
    partitions: &[AnnulusPartition],
    cfg: &CovarianceConfig,
) -> Result<ClusteringFit> {
    let state = gibbs_state(family)?;
    clustering_scan_state(family, &state, partitions, cfg)
}

pub fn clustering_scan_state(
    family: &InteractionFamily,
    state: &DenseState,
    partitions: &[AnnulusPartition],
    cfg: &CovarianceConfig,
) -> Result<ClusteringFit> {
    let lat = &family.lattice;
    let mut seps: Vec<usize> = partitions.iter().map(|p| p.distance_ac(lat)).collect();
    seps.sort_unstable();
    seps.dedup();
    if seps.len() < 3 {
        return Err(GlabError::Config(format!("clustering scan needs 3 distinct separations, got {}", seps.len())));
    }
    let samples: Result<Vec<ClusteringSample>> = partitions
        .par_iter()
        .map(|p| {
            let est = covariance(state, &p.a.sites, &p.c.sites, Restriction::Algebra, Some(family), cfg)?;
            Ok(ClusteringSample { separation: p.distance_ac(lat), lower: est.lower, upper: est.upper, restriction: est.restriction })
        })
        .collect();
    Ok(fit_samples(samples?))
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ProbeCriteria {
    /// A fit with a longer correlation length counts as a violation.
    pub xi_max: f64,
}

impl Default for ProbeCriteria {
    fn default() -> Self {
        Self { xi_max: 5.0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProbeResult {
    pub worst: ClusteringFit,
    pub worst_delta: Vec<f64>,
    pub violation: Option<Vec<f64>>,
    pub evaluated: usize,
}

fn fit_badness(f: &ClusteringFit) -> f64 {
    if f.below_floor {
        0.0
    } else if f.xi.is_finite() {
        f.xi
    } else {
        f64::INFINITY
    }
}

/// Worst clustering fit over perturbations `|Δβ|_∞ ≤ δ`: uniform samples
/// plus every `±δ` corner when the family has at most 12 terms.
pub fn stable_clustering_probe(
    family: &InteractionFamily,
    delta: f64,
    samples: usize,
    partitions: &[AnnulusPartition],
    criteria: &ProbeCriteria,
    cfg: &CovarianceConfig,
) -> Result<ProbeResult> {
    if samples == 0 {
        return Err(GlabError::Config("probe needs at least one sample".into()));
    }
    let nt = family.terms.len();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed);
    let mut deltas: Vec<Vec<f64>> = vec![vec![0.0; nt]];
    if delta > 0.0 {
        let u = Uniform::new_inclusive(-delta, delta).map_err(|e| GlabError::Config(e.to_string()))?;
        for _ in 0..samples {
            deltas.push((0..nt).map(|_| u.sample(&mut rng)).collect());
        }
        if nt <= 12 {
            for mask in 0..(1usize << nt) {
                deltas.push((0..nt).map(|k| if mask >> k & 1 == 1 { delta } else { -delta }).collect());
            }
        }
    }
    let fits: Result<Vec<(Vec<f64>, ClusteringFit)>> = deltas
        .into_par_iter()
        .map(|d| {
            let beta: Vec<f64> = family.beta.iter().zip(&d).map(|(b, x)| b + x).collect();
            let fam = family.with_beta(beta)?;
            let fit = clustering_scan(&fam, partitions, cfg)?;
            Ok((d, fit))
        })
        .collect();
    let fits = fits?;
    let evaluated = fits.len();
    let (worst_delta, worst) = fits
        .iter()
        .max_by(|a, b| fit_badness(&a.1).total_cmp(&fit_badness(&b.1)))
        .cloned()
        .expect("at least one fit");
    let violation = fits
        .iter()
        .find(|(_, f)| !f.below_floor && (!f.xi.is_finite() || f.xi > criteria.xi_max))
        .map(|(d, _)| d.clone());
    Ok(ProbeResult { worst, worst_delta, violation, evaluated })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{annulus_partition, ising_chain, Lattice};
    use crate::qcore::linalg::{c, pauli_string, random_unitary};
    use crate::qcore::operator::{DenseOperator, STATE_TOL};

    fn bell() -> DenseState {
        let s = 0.5f64.sqrt();
        DenseState::pure(&[c(s), ZERO, ZERO, c(s)], &[0, 1]).unwrap()
    }

    #[test]
    fn product_state_has_zero_covariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = linalg::random_density(&mut rng, 2);
        let b = linalg::random_density(&mut rng, 4);
        let st = DenseState::certify(DenseOperator::new(linalg::kron(&a, &b), vec![0, 1, 2]).unwrap(), STATE_TOL).unwrap();
        let e = covariance(&st, &[0], &[2], Restriction::Full, None, &CovarianceConfig::default()).unwrap();
        assert!(e.lower < 1e-9 && e.upper < 1e-9);
    }

    #[test]
    fn bell_pair_reaches_one() {
        let e = covariance(&bell(), &[0], &[1], Restriction::Full, None, &CovarianceConfig::default()).unwrap();
        assert!(e.lower >= 1.0 - 1e-6, "{}", e.lower);
        assert!(e.lower <= e.upper + 1e-9);
        assert!(e.monotone);
        assert!(linalg::op_norm(&e.witness_x) <= 1.0 + 1e-9);
        let xx = connected_correlator(&bell(), &[0], &pauli_string("X"), &[1], &pauli_string("X")).unwrap();
        assert!((xx - 1.0).abs() < 1e-12);
    }

    #[test]
    fn local_unitary_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rho = linalg::random_density(&mut rng, 8);
        let st = DenseState::certify(DenseOperator::new(rho.clone(), vec![0, 1, 2]).unwrap(), STATE_TOL).unwrap();
        let u = linalg::kron(&random_unitary(&mut rng, 2), &linalg::identity(4));
        let st2 = DenseState::certify(DenseOperator::new(linalg::sandwich(&u, &rho), vec![0, 1, 2]).unwrap(), STATE_TOL).unwrap();
        let cfg = CovarianceConfig { restarts: 12, ..Default::default() };
        let a = covariance(&st, &[0], &[1, 2], Restriction::Full, None, &cfg).unwrap();
        let b = covariance(&st2, &[0], &[1, 2], Restriction::Full, None, &cfg).unwrap();
        assert!((a.upper - b.upper).abs() < 1e-8);
        assert!((a.lower - b.lower).abs() < 1e-6);
    }

    /// `⟨Π_k Z_{s_k}⟩` on a periodic zero-field Ising ring by transfer matrices.
    fn ring_moment(n: usize, beta: f64, sites: &[usize]) -> f64 {
        type M2 = nalgebra::Matrix2<f64>;
        let t = M2::new(beta.exp(), (-beta).exp(), (-beta).exp(), beta.exp());
        let z = M2::new(1.0, 0.0, 0.0, -1.0);
        let mut prod = M2::identity();
        let mut tn = M2::identity();
        for k in 0..n {
            let zk = if sites.iter().filter(|&&s| s == k).count() % 2 == 1 { z } else { M2::identity() };
            prod = prod * zk * t;
            tn *= t;
        }
        prod.trace() / tn.trace()
    }

    #[test]
    fn ring_bond_correlator_matches_transfer_matrix() {
        let (n, beta) = (8, 0.4);
        let f = ising_chain(n, true, beta, 0.0).unwrap();
        let st = gibbs_state(&f).unwrap();
        let (x, y) = ([0, 1], [4, 5]);
        let want = ring_moment(n, beta, &[0, 1, 4, 5]) - ring_moment(n, beta, &[0, 1]) * ring_moment(n, beta, &[4, 5]);
        let e = covariance(&st, &x, &y, Restriction::Algebra, Some(&f), &CovarianceConfig::default()).unwrap();
        assert!((e.lower - want.abs()).abs() < 1e-6, "{} vs {want}", e.lower);
        assert!((e.upper - want.abs()).abs() < 1e-6);
        assert!(e.witness_residual < 1e-8);
        let full = covariance(&st, &x, &y, Restriction::Full, None, &CovarianceConfig::default()).unwrap();
        assert!(e.lower <= full.upper + 1e-9);
    }

    fn chain_partitions(n: usize) -> Vec<AnnulusPartition> {
        let lat = Lattice::chain(n, false).unwrap();
        (1..=4).map(|w| annulus_partition(&lat, 0, 0, w, 0).unwrap()).collect()
    }

    #[test]
    fn high_temperature_fit_and_floor() {
        let f = ising_chain(7, false, 0.1, 0.5).unwrap();
        let fit = clustering_scan(&f, &chain_partitions(7), &CovarianceConfig::default()).unwrap();
        assert!(fit.accepted());
        assert!(fit.r_squared > 0.9);
        assert!(fit.xi < 1.0);
        let hot = ising_chain(7, false, 0.0, 0.0).unwrap();
        assert!(clustering_scan(&hot, &chain_partitions(7), &CovarianceConfig::default()).unwrap().below_floor);
    }

    #[test]
    fn probe_with_zero_delta_is_plain_scan() {
        let f = ising_chain(6, false, 0.3, 0.5).unwrap();
        let parts: Vec<AnnulusPartition> = chain_partitions(6).into_iter().take(3).collect();
        let cfg = CovarianceConfig { restarts: 2, ..Default::default() };
        let scan = clustering_scan(&f, &parts, &cfg).unwrap();
        let probe = stable_clustering_probe(&f, 0.0, 1, &parts, &ProbeCriteria::default(), &cfg).unwrap();
        assert_eq!(probe.evaluated, 1);
        assert!((probe.worst.xi - scan.xi).abs() < 1e-12);
    }
}
