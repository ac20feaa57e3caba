//! Quantum belief propagation and the local-perturbation identity.
//!
//! For `H(s) = H(0) + s·V` the Gibbs weight obeys
//! `∂_s e^{−H(s)} = −½ {Φ^s(V), e^{−H(s)}}` with the spectral filter
//! `f̃(ω) = tanh(ω/2)/(ω/2)`, which gives
//! `Tr[(ρ(1) − ρ(0)) O] = −½ ∫ ds Cov_s(Φ, O) + Cov_s(O, Φ)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::correlations::{covariance, CovarianceConfig, Restriction};
use crate::error::{GlabError, Result};
use crate::model::{gibbs_state, InteractionFamily, Term};
use crate::qcore::linalg::{self, c, Mat, C64};
use crate::qcore::operator::{DenseOperator, DenseState};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QbpFilter {
    /// `f̃(ω) = tanh(ω/2)/(ω/2)`.
    #[default]
    TanhRatio,
}

impl QbpFilter {
    pub fn eval(&self, omega: f64) -> f64 {
        match self {
            Self::TanhRatio => {
                let h = 0.5 * omega;
                if h.abs() < 1e-6 {
                    1.0 - h * h / 3.0
                } else {
                    h.tanh() / h
                }
            }
        }
    }

    /// Name of the time-domain kernel whose Fourier transform is `f̃`.
    pub fn time_domain_tag(&self) -> &'static str {
        match self {
            Self::TanhRatio => "inverse Fourier transform of tanh(w/2)/(w/2)",
        }
    }
}

/// `Φ(V)_{jk} = V_{jk} f̃(E_j − E_k)` in the eigenbasis `(energies, vectors)`.
pub fn qbp_in_eigenbasis(energies: &[f64], vectors: &Mat, v: &Mat, filter: QbpFilter) -> Mat {
    let vt = linalg::sandwich(&vectors.adjoint(), v);
    let n = energies.len();
    let ft = Mat::from_fn(n, n, |j, k| vt[(j, k)] * filter.eval(energies[j] - energies[k]));
    linalg::sandwich(vectors, &ft)
}

/// `Φ(V)` for `H` with `V` embedded into `H`'s labels.
pub fn qbp_operator(h: &DenseOperator, v: &DenseOperator, filter: QbpFilter) -> Result<DenseOperator> {
    if linalg::hermiticity_defect(&h.mat) > 1e-10 {
        return Err(GlabError::Domain("QBP generator must be Hermitian".into()));
    }
    let ve = v.embed(&h.labels)?;
    let (e, u) = linalg::eigh(&h.mat);
    DenseOperator::new(qbp_in_eigenbasis(&e, &u, &ve.mat, filter), h.labels.clone())
}

fn gibbs_from(h: &Mat) -> Mat {
    let (e, u) = linalg::eigh(h);
    let e0 = e[0];
    let z: f64 = e.iter().map(|x| (-(x - e0)).exp()).sum();
    linalg::hermitize(&linalg::spectral_apply(&e, &u, |x| c((-(x - e0)).exp() / z)))
}

/// `‖∂_s e^{−H(s)} + ½{Φ^s(V), e^{−H(s)}}‖ / ‖e^{−H(s)}‖` at `s`, with a
/// central difference of width `step`. The common normalisation is fixed at
/// `s` so the identity stays linear.
pub fn defining_ode_residual(h0: &DenseOperator, v: &DenseOperator, s: f64, step: f64, filter: QbpFilter) -> Result<f64> {
    let ve = v.embed(&h0.labels)?.mat;
    let hs = &h0.mat + ve.scale(s);
    let (e, u) = linalg::eigh(&hs);
    let e0 = e[0];
    let w = |shift: f64| -> Mat {
        let h = &hs + ve.scale(shift);
        let (ee, uu) = linalg::eigh(&h);
        linalg::spectral_apply(&ee, &uu, |x| c((-(x - e0)).exp()))
    };
    let deriv = (w(step) - w(-step)).unscale(2.0 * step);
    let g = linalg::spectral_apply(&e, &u, |x| c((-(x - e0)).exp()));
    let phi = qbp_in_eigenbasis(&e, &u, &ve, filter);
    let anti = linalg::mul(&phi, &g) + linalg::mul(&g, &phi);
    let res = deriv + anti.scale(0.5);
    Ok(linalg::op_norm(&res) / linalg::op_norm(&g))
}

/// Gauss–Legendre nodes and weights on `[0, 1]`.
pub fn gauss_legendre_unit(n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 0 { 1.0 } else { p1 };
            let pm = if n <= 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * pn - pm) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        out.push((0.5 * (1.0 - x), 0.5 * w));
    }
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    out
}

/// Connected correlation `Tr(ρ A B) − Tr(ρ A) Tr(ρ B)`.
fn cov(rho: &Mat, a: &Mat, b: &Mat) -> C64 {
    linalg::trace(&linalg::mul(rho, &linalg::mul(a, b)))
        - linalg::trace(&linalg::mul(rho, a)) * linalg::trace(&linalg::mul(rho, b))
}

/// `−½ ∫_0^1 ds Cov_s(Φ^s(V), O) + Cov_s(O, Φ^s(V))` with the given nodes.
fn lppl_integral(h0: &Mat, v: &Mat, o: &Mat, nodes: &[(f64, f64)], filter: QbpFilter) -> f64 {
    nodes
        .par_iter()
        .map(|&(s, w)| {
            let hs = h0 + v.scale(s);
            let (e, u) = linalg::eigh(&hs);
            let e0 = e[0];
            let z: f64 = e.iter().map(|x| (-(x - e0)).exp()).sum();
            let rho = linalg::spectral_apply(&e, &u, |x| c((-(x - e0)).exp() / z));
            let phi = qbp_in_eigenbasis(&e, &u, v, filter);
            w * (-0.5) * (cov(&rho, &phi, o) + cov(&rho, o, &phi)).re
        })
        .sum()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LpplIdentity {
    /// `Tr[(ρ(1) − ρ(0)) O]`.
    pub lhs: f64,
    pub rhs: f64,
    pub rhs_doubled: f64,
    pub residual: f64,
    pub nodes: usize,
    /// Doubling the nodes moved the integral by more than `1e-4`.
    pub non_converged: bool,
}

/// Both sides of the perturbation identity along `H(s) = H(0) + s·V`.
pub fn lppl_identity_check(
    h0: &DenseOperator,
    v: &DenseOperator,
    o: &DenseOperator,
    nodes: usize,
    filter: QbpFilter,
) -> Result<LpplIdentity> {
    if nodes == 0 {
        return Err(GlabError::Config("s-quadrature needs at least one node".into()));
    }
    if v.labels.iter().any(|s| o.labels.contains(s)) {
        return Err(GlabError::Partition("observable overlaps the perturbation".into()));
    }
    let ve = v.embed(&h0.labels)?.mat;
    let oe = o.embed(&h0.labels)?.mat;
    let r0 = gibbs_from(&h0.mat);
    let r1 = gibbs_from(&(&h0.mat + &ve));
    let lhs = linalg::trace(&linalg::mul(&(r1 - r0), &oe)).re;
    let rhs = lppl_integral(&h0.mat, &ve, &oe, &gauss_legendre_unit(nodes), filter);
    let rhs_doubled = lppl_integral(&h0.mat, &ve, &oe, &gauss_legendre_unit(2 * nodes), filter);
    Ok(LpplIdentity {
        lhs,
        rhs,
        rhs_doubled,
        residual: (lhs - rhs).abs(),
        nodes,
        non_converged: (rhs - rhs_doubled).abs() > 1e-4,
    })
}

/// `Π_X(O) = Tr_{outside X}(O)/d_outside ⊗ I`, returned on `O`'s labels.
pub fn localize(o: &DenseOperator, region: &[usize]) -> Result<DenseOperator> {
    let keep: Vec<usize> = o.labels.iter().copied().filter(|s| region.contains(s)).collect();
    let outside = o.labels.len() - keep.len();
    let reduced = o.partial_trace(&keep)?.scale(1.0 / (1usize << outside) as f64);
    reduced.embed(&o.labels)
}

/// `‖Φ(V) − Π_{A_{+l}} Φ(V)‖` for `l = 0, 1, …` until `A_{+l}` covers the lattice.
pub fn truncation_profile(family: &InteractionFamily, v: &DenseOperator, filter: QbpFilter) -> Result<Vec<(usize, f64)>> {
    let h = family.hamiltonian()?;
    let phi = qbp_operator(&h, v, filter)?;
    let lat = &family.lattice;
    let mut out = vec![];
    for l in 0..=lat.diameter(&lat.sites()) {
        let region = lat.dilate(&v.labels, l);
        let loc = localize(&phi, &region.sites)?;
        out.push((l, linalg::op_norm(&(&phi.mat - &loc.mat))));
        if region.len() == lat.n_sites() {
            break;
        }
    }
    Ok(out)
}

/// A local perturbation `V` added to a family as one extra term.
#[derive(Debug, Clone)]
pub struct Perturbation {
    pub support: Vec<usize>,
    pub op: Mat,
}

impl Perturbation {
    pub fn norm(&self) -> f64 {
        linalg::op_norm(&self.op)
    }

    pub fn dense(&self) -> DenseOperator {
        DenseOperator { mat: self.op.clone(), labels: self.support.clone() }
    }

    /// Family for `H + s·V`.
    pub fn family_at(&self, family: &InteractionFamily, s: f64) -> Result<InteractionFamily> {
        let nrm = self.norm();
        let mut terms = family.terms.clone();
        let mut beta = family.beta.clone();
        if nrm > 0.0 {
            terms.push(Term { support: self.support.clone(), h: self.op.unscale(nrm), name: "perturbation".into() });
            beta.push(s * nrm);
        }
        InteractionFamily::new(family.lattice.clone(), terms, beta, &family.name)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LpplBound {
    pub lhs: f64,
    pub v_norm: f64,
    pub l: usize,
    pub velocity: f64,
    pub qbp_tail: f64,
    /// `sup_s` of the covariance bounds over the `s` grid.
    pub cov_lower: f64,
    pub cov_upper: f64,
    pub rhs_lower: f64,
    pub rhs_upper: f64,
    pub s_grid: Vec<f64>,
}

impl LpplBound {
    pub fn holds(&self, slack: f64) -> bool {
        self.lhs <= self.rhs_upper + slack
    }
}

/// `‖ρ^C(0) − ρ^C(1)‖_1` against `‖V‖ (sup_s Cov^A_s(A_{+l}; C) + 6|A| e^{−l/(1+v/π)})`.
///
/// The supremum over `s` is taken on `s_points` uniform grid points, so
/// `cov_upper` bounds the grid maximum, not the continuum supremum.
pub fn lppl_bound_check(
    family: &InteractionFamily,
    pert: &Perturbation,
    c_region: &[usize],
    l: usize,
    velocity: Option<f64>,
    s_points: usize,
    cfg: &CovarianceConfig,
) -> Result<LpplBound> {
    let lat = &family.lattice;
    if c_region.iter().any(|s| pert.support.contains(s)) {
        return Err(GlabError::Partition("C overlaps the perturbation".into()));
    }
    let dac = lat.set_distance(&pert.support, c_region);
    if l >= dac {
        return Err(GlabError::Partition(format!("l = {l} must be below d(A,C) = {dac}")));
    }
    let f1 = pert.family_at(family, 1.0)?;
    let r0 = gibbs_state(family)?;
    let r1 = gibbs_state(&f1)?;
    let lhs = r0.marginal(c_region)?.trace_distance(&r1.marginal(c_region)?)?;
    let v = velocity.unwrap_or_else(|| family.lieb_robinson_velocity().max(f1.lieb_robinson_velocity()));
    let v_norm = pert.norm();
    let qbp_tail = 6.0 * pert.support.len() as f64 * (-(l as f64) / (1.0 + v / std::f64::consts::PI)).exp();
    let al = lat.dilate(&pert.support, l);
    let n = s_points.max(2);
    let s_grid: Vec<f64> = (0..n).map(|k| k as f64 / (n - 1) as f64).collect();
    let ests: Result<Vec<(f64, f64)>> = s_grid
        .par_iter()
        .map(|&s| {
            let fs = pert.family_at(family, s)?;
            let st: DenseState = gibbs_state(&fs)?;
            let e = covariance(&st, &al.sites, c_region, Restriction::Algebra, Some(&f1), cfg)?;
            Ok((e.lower, e.upper))
        })
        .collect();
    let ests = ests?;
    let cov_lower = ests.iter().map(|e| e.0).fold(0.0, f64::max);
    let cov_upper = ests.iter().map(|e| e.1).fold(0.0, f64::max);
    Ok(LpplBound {
        lhs,
        v_norm,
        l,
        velocity: v,
        qbp_tail,
        cov_lower,
        cov_upper,
        rhs_lower: v_norm * (cov_lower + qbp_tail),
        rhs_upper: v_norm * (cov_upper + qbp_tail),
        s_grid,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ising_chain, tfim_chain};
    use crate::qcore::linalg::pauli_string;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn z(site: usize) -> DenseOperator {
        DenseOperator::new(pauli_string("Z"), vec![site]).unwrap()
    }

    #[test]
    fn filter_shape() {
        let f = QbpFilter::TanhRatio;
        assert_eq!(f.eval(0.0), 1.0);
        for w in [0.1, 1.0, 5.0, 40.0] {
            assert!((f.eval(w) - f.eval(-w)).abs() < 1e-15);
            assert!(f.eval(w).abs() <= 1.0);
        }
        assert!((f.eval(1e-7) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let q = gauss_legendre_unit(8);
        let total: f64 = q.iter().map(|p| p.1).sum();
        assert!((total - 1.0).abs() < 1e-14);
        let m: f64 = q.iter().map(|p| p.1 * p.0.powi(11)).sum();
        assert!((m - 1.0 / 12.0).abs() < 1e-14);
        let e: f64 = gauss_legendre_unit(64).iter().map(|p| p.1 * p.0.exp()).sum();
        assert!((e - (1f64.exp() - 1.0)).abs() < 1e-13);
    }

    #[test]
    fn commuting_perturbation_is_fixed() {
        let f = ising_chain(3, false, 0.7, 0.0).unwrap();
        let h = f.hamiltonian().unwrap();
        let phi = qbp_operator(&h, &z(1), QbpFilter::TanhRatio).unwrap();
        let ze = z(1).embed(&h.labels).unwrap();
        assert!((phi.mat - ze.mat).norm() < 1e-12);
    }

    #[test]
    fn contraction_and_adjoint() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let h = DenseOperator::new(linalg::random_hermitian(&mut rng, 8).scale(2.0), vec![0, 1, 2]).unwrap();
            let v = DenseOperator::new(linalg::random_normal_matrix(&mut rng, 8, 8), vec![0, 1, 2]).unwrap();
            let phi = qbp_operator(&h, &v, QbpFilter::TanhRatio).unwrap();
            let phid = qbp_operator(&h, &v.dagger(), QbpFilter::TanhRatio).unwrap();
            assert!((phid.mat - phi.mat.adjoint()).norm() < 1e-10);
            let vh = DenseOperator::new(linalg::hermitize(&v.mat), vec![0, 1, 2]).unwrap();
            let ph = qbp_operator(&h, &vh, QbpFilter::TanhRatio).unwrap();
            assert!(linalg::op_norm(&ph.mat) <= linalg::op_norm(&vh.mat) + 1e-12);
        }
    }

    #[test]
    fn ode_residual_small() {
        let f = tfim_chain(3, false, 0.8, 1.1).unwrap();
        let h = f.hamiltonian().unwrap();
        let v = DenseOperator::new(pauli_string("XZ").scale(0.4), vec![0, 1]).unwrap();
        for s in [0.0, 0.5, 1.0] {
            let r = defining_ode_residual(&h, &v, s, 1e-4, QbpFilter::TanhRatio).unwrap();
            assert!(r < 1e-6, "s={s}: {r}");
        }
    }

    #[test]
    fn lppl_identity_tfim() {
        let f = tfim_chain(4, false, 1.0, 1.0).unwrap();
        let h = f.hamiltonian().unwrap();
        let v = z(0).scale(0.3);
        let r = lppl_identity_check(&h, &v, &z(3), 64, QbpFilter::TanhRatio).unwrap();
        assert!(r.residual < 1e-5, "{r:?}");
        assert!(!r.non_converged);
        assert!(r.lhs.abs() > 1e-6);
        let zero = lppl_identity_check(&h, &z(0).scale(0.0), &z(3), 8, QbpFilter::TanhRatio).unwrap();
        assert!(zero.lhs.abs() < 1e-14 && zero.rhs.abs() < 1e-14);
    }

    #[test]
    fn truncation_decays() {
        let f = tfim_chain(6, false, 0.6, 1.0).unwrap();
        let prof = truncation_profile(&f, &z(0), QbpFilter::TanhRatio).unwrap();
        assert!(prof.last().unwrap().1 < 1e-12);
        let first = prof[0].1;
        assert!(first > prof[2].1 && prof[2].1 > prof[4].1, "{prof:?}");
    }

    #[test]
    fn lppl_bound_classical() {
        let f = ising_chain(6, false, 0.5, 0.0).unwrap();
        let p = Perturbation { support: vec![0], op: pauli_string("Z").scale(-0.3) };
        let b = lppl_bound_check(&f, &p, &[5], 2, None, 5, &CovarianceConfig::default()).unwrap();
        assert!(b.holds(1e-12), "{b:?}");
        assert!(b.lhs > 0.0);
        let zero = Perturbation { support: vec![0], op: Mat::zeros(2, 2) };
        let b0 = lppl_bound_check(&f, &zero, &[5], 2, None, 3, &CovarianceConfig::default()).unwrap();
        assert!(b0.lhs < 1e-12);
    }
}
