//! Petz, rotated Petz and twirled Petz recovery maps.
//!
//! All maps are realised as trace-and-prepare gates: the erased sites are
//! traced out and the kept sites are rebuilt together with the erased ones
//! from the reference state.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{GlabError, Result};
use crate::qcore::channel::{ChannelGate, GateKind};
use crate::qcore::linalg::{self, c, Mat, C64, ONE, PINV_REL, ZERO};
use crate::qcore::operator::DenseState;

/// `β_0(t) = (π/2) / (cosh(πt) + 1)`.
pub fn beta0(t: f64) -> f64 {
    PI / 2.0 / ((PI * t).cosh() + 1.0)
}

/// `∫_{-∞}^{x} β_0`, from the antiderivative `(1/2) tanh(πt/2)`.
pub fn beta0_cdf(x: f64) -> f64 {
    0.5 + 0.5 * (PI * x / 2.0).tanh()
}

/// Mass of `β_0` outside `[-w, w]`.
pub fn beta0_tail(w: f64) -> f64 {
    2.0 * (1.0 - beta0_cdf(w))
}

/// Fourier transform of `β_0`: `∫ β_0(t) e^{iωt} dt = ω / sinh ω`.
pub fn beta0_transform(omega: f64) -> f64 {
    if omega.abs() < 1e-6 {
        1.0 - omega * omega / 6.0
    } else if omega.abs() > 700.0 {
        0.0
    } else {
        omega / omega.sinh()
    }
}

/// Imaginary-time rotation schedule for a recovery map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Quadrature {
    /// Plain Petz map.
    Plain,
    /// Single rotated map at time `t`.
    Rotated { t: f64 },
    /// Explicit nodes and weights; weights are renormalised to sum to one.
    Nodes { nodes: Vec<f64>, weights: Vec<f64> },
    /// Trapezoid rule for `β_0` on `[-window, window]`.
    Trapezoid { window: f64, nodes: usize },
    /// Exact `β_0` average, using its closed-form Fourier transform.
    Exact,
}

impl Default for Quadrature {
    fn default() -> Self {
        Quadrature::Trapezoid { window: 12.0, nodes: 241 }
    }
}

impl Quadrature {
    /// Normalised `(t, w)` list, or `None` when the kernel is closed form.
    pub fn nodes(&self) -> Option<Vec<(f64, f64)>> {
        match self {
            Quadrature::Plain => Some(vec![(0.0, 1.0)]),
            Quadrature::Rotated { t } => Some(vec![(*t, 1.0)]),
            Quadrature::Nodes { nodes, weights } => {
                let z: f64 = weights.iter().sum();
                Some(nodes.iter().zip(weights).map(|(&t, &w)| (t, w / z)).collect())
            }
            Quadrature::Trapezoid { window, nodes } => {
                let n = (*nodes).max(1);
                if n == 1 {
                    return Some(vec![(0.0, 1.0)]);
                }
                let h = 2.0 * window / (n - 1) as f64;
                let raw: Vec<(f64, f64)> = (0..n)
                    .map(|k| {
                        let t = -window + h * k as f64;
                        let end = if k == 0 || k == n - 1 { 0.5 } else { 1.0 };
                        (t, end * h * beta0(t))
                    })
                    .collect();
                let z: f64 = raw.iter().map(|p| p.1).sum();
                Some(raw.into_iter().map(|(t, w)| (t, w / z)).collect())
            }
            Quadrature::Exact => None,
        }
    }

    /// Unnormalised trapezoid mass, the quadrature estimate of `∫ β_0`.
    pub fn raw_mass(&self) -> f64 {
        match self {
            Quadrature::Trapezoid { window, nodes } if *nodes > 1 => {
                let h = 2.0 * window / (*nodes - 1) as f64;
                (0..*nodes)
                    .map(|k| {
                        let t = -window + h * k as f64;
                        let end = if k == 0 || k == *nodes - 1 { 0.5 } else { 1.0 };
                        end * h * beta0(t)
                    })
                    .sum()
            }
            _ => 1.0,
        }
    }

    /// Mass of `β_0` discarded by truncation to the window.
    pub fn truncation_error(&self) -> f64 {
        match self {
            Quadrature::Trapezoid { window, .. } => 2.0 * beta0_tail(*window),
            _ => 0.0,
        }
    }
}

/// A recovery channel rebuilding `erased` from the kept sites using a
/// reference state.
#[derive(Debug, Clone)]
pub struct RecoveryMap {
    pub reference_hash: String,
    pub erased: Vec<usize>,
    pub kept: Vec<usize>,
    pub quadrature: Quadrature,
    pub gate: ChannelGate,
    /// Number of kept-marginal eigenvalues treated as zero.
    pub null_directions: usize,
    /// Smallest retained eigenvalue of the kept marginal relative to the largest.
    pub conditioning: f64,
}

impl RecoveryMap {
    pub fn apply(&self, state: &DenseState) -> Result<DenseState> {
        self.gate.apply(state)
    }

    /// Warning text when the kept marginal is close to singular.
    pub fn conditioning_warning(&self) -> Option<String> {
        if self.null_directions > 0 || self.conditioning < 1e-10 {
            Some(format!(
                "kept marginal has {} null directions, conditioning {:.2e}",
                self.null_directions, self.conditioning
            ))
        } else {
            None
        }
    }
}

/// Plain or single-node rotated Petz map of `sigma` erasing `erase`.
pub fn petz_map(sigma: &DenseState, erase: &[usize], t: f64) -> Result<RecoveryMap> {
    let q = if t == 0.0 { Quadrature::Plain } else { Quadrature::Rotated { t } };
    build(sigma, erase, &q)
}

/// `β_0`-averaged rotated Petz map.
pub fn twirled_petz(sigma: &DenseState, erase: &[usize], quadrature: &Quadrature) -> Result<RecoveryMap> {
    build(sigma, erase, quadrature)
}

enum Kernel {
    One,
    Nodes(Vec<(f64, f64)>),
    Exact,
}

fn build(sigma: &DenseState, erase: &[usize], quadrature: &Quadrature) -> Result<RecoveryMap> {
    let labels = sigma.labels();
    if erase.iter().any(|s| !labels.contains(s)) {
        return Err(GlabError::Label(format!("erased sites {erase:?} not in reference {labels:?}")));
    }
    let kept: Vec<usize> = labels.iter().copied().filter(|s| !erase.contains(s)).collect();
    let mut support = kept.clone();
    support.extend_from_slice(erase);
    let kernel = match quadrature.nodes() {
        None => Kernel::Exact,
        Some(n) if n.len() == 1 && n[0].0 == 0.0 => Kernel::One,
        Some(n) => Kernel::Nodes(n),
    };
    let sig = sigma.op.reorder(&support)?;
    let sig_k = sigma.op.partial_trace(&kept)?;
    let (map, nulls, cond) = spectral_petz(&sig.mat, &sig_k.mat, &kernel);
    let gate = ChannelGate::trace_prepare(support, kept.clone(), map, GateKind::Recovery)?.with_tag(sigma.hash());
    Ok(RecoveryMap {
        reference_hash: sigma.hash(),
        erased: erase.to_vec(),
        kept,
        quadrature: quadrature.clone(),
        gate,
        null_directions: nulls,
        conditioning: cond,
    })
}

/// Preparation map `T` (`d_S² × d_K²`, column stacking) of the recovery.
///
/// `sigma` is ordered kept-first. In the eigenbases `σ = U s U†`,
/// `σ_K = V d V†` and with `W = U†(V ⊗ I)`, the image of `|v_j⟩⟨v_k|` has
/// `U`-basis entries `√(s_m s_n)/√(d_j d_k) · g(ln d_j − ln d_k − ln s_m + ln s_n) · (W_j W_k†)_{mn}`,
/// with `g ≡ 1` for the plain map and `g(ω) = Σ_t w_t e^{iωt}` otherwise.
/// Null directions of `σ_K` are sent to `σ`.
fn spectral_petz(sigma: &Mat, sigma_k: &Mat, kernel: &Kernel) -> (Mat, usize, f64) {
    let ds = sigma.nrows();
    let dk = sigma_k.nrows();
    let dx = ds / dk;
    let (s, u) = linalg::eigh(&linalg::hermitize(sigma));
    let (d, v) = linalg::eigh(&linalg::hermitize(sigma_k));
    let smax = s.iter().cloned().fold(0.0, f64::max);
    let dmax = d.iter().cloned().fold(0.0, f64::max);
    let s_ok: Vec<bool> = s.iter().map(|&x| x > PINV_REL * smax).collect();
    let d_ok: Vec<bool> = d.iter().map(|&x| x > PINV_REL * dmax).collect();
    let nulls = d_ok.iter().filter(|&&b| !b).count();
    let cond = d.iter().zip(&d_ok).filter(|p| *p.1).map(|p| *p.0).fold(f64::INFINITY, f64::min) / dmax;
    let sq_s: Vec<f64> = s.iter().zip(&s_ok).map(|(&x, &ok)| if ok { x.sqrt() } else { 0.0 }).collect();
    let isq_d: Vec<f64> = d.iter().zip(&d_ok).map(|(&x, &ok)| if ok { 1.0 / x.sqrt() } else { 0.0 }).collect();
    let ln_s: Vec<f64> = s.iter().zip(&s_ok).map(|(&x, &ok)| if ok { x.ln() } else { 0.0 }).collect();
    let ln_d: Vec<f64> = d.iter().zip(&d_ok).map(|(&x, &ok)| if ok { x.ln() } else { 0.0 }).collect();

    let vi = linalg::kron(&v, &linalg::identity(dx));
    let w = linalg::mul(&u.adjoint(), &vi);
    // P[(m + ds j), x] = W[m, j dx + x]; Q = P P† holds every W_j W_k†.
    let p = Mat::from_fn(ds * dk, dx, |row, x| w[(row % ds, (row / ds) * dx + x)]);
    let q = linalg::mul(&p, &p.adjoint());

    let g = kernel_table(kernel, &ln_s, &ln_d, &s_ok, &d_ok);

    // T in the (U output, V input) basis.
    let mut t_uv = Mat::zeros(ds * ds, dk * dk);
    for k in 0..dk {
        for j in 0..dk {
            if !(d_ok[j] && d_ok[k]) {
                continue;
            }
            let col = j + dk * k;
            let pref = isq_d[j] * isq_d[k];
            for n in 0..ds {
                if !s_ok[n] {
                    continue;
                }
                for m in 0..ds {
                    if !s_ok[m] {
                        continue;
                    }
                    let mut val = q[(m + ds * j, n + ds * k)] * (sq_s[m] * sq_s[n] * pref);
                    if let Some(g) = &g {
                        val *= g(m, n, j, k);
                    }
                    t_uv[(m + ds * n, col)] = val;
                }
            }
        }
    }
    // Rotate outputs back: X ↦ U X U†, vectorised as conj(U) ⊗ U.
    let perm = permutation_of(&u);
    let mut t_v = Mat::zeros(ds * ds, dk * dk);
    for col in 0..dk * dk {
        let (j, k) = (col % dk, col / dk);
        if !(d_ok[j] && d_ok[k]) {
            if j == k {
                t_v.set_column(col, &linalg::vec_col(sigma));
            }
            continue;
        }
        if let Some(p) = &perm {
            let src = t_uv.column(col);
            let mut dst = t_v.column_mut(col);
            for n in 0..ds {
                for m in 0..ds {
                    dst[p[m] + ds * p[n]] = src[m + ds * n];
                }
            }
            continue;
        }
        let x = linalg::unvec_col(t_uv.column(col).as_slice(), ds);
        let y = linalg::mul(&linalg::mul(&u, &x), &u.adjoint());
        t_v.set_column(col, &linalg::vec_col(&y));
    }
    // Inputs: |p⟩⟨q| = Σ_jk conj(V_pj) V_qk |v_j⟩⟨v_k|.
    let basis = linalg::kron(&v, &v.map(|z| z.conj()));
    let mut map = linalg::mul(&t_v, &basis.transpose());
    map.iter_mut().for_each(|z| {
        if z.norm() < 1e-300 {
            *z = ZERO
        }
    });
    (map, nulls, cond)
}

/// `p` with `u[(p[m], m)] = 1` when `u` is a permutation matrix.
fn permutation_of(u: &Mat) -> Option<Vec<usize>> {
    let mut p = Vec::with_capacity(u.ncols());
    for m in 0..u.ncols() {
        let col = u.column(m);
        let mut hit = None;
        for (i, z) in col.iter().enumerate() {
            if *z == ONE && hit.is_none() {
                hit = Some(i);
            } else if *z != ZERO {
                return None;
            }
        }
        p.push(hit?);
    }
    Some(p)
}

type KernelFn = Box<dyn Fn(usize, usize, usize, usize) -> C64>;

fn kernel_table(kernel: &Kernel, ln_s: &[f64], ln_d: &[f64], s_ok: &[bool], d_ok: &[bool]) -> Option<KernelFn> {
    let ds = ln_s.len();
    let dk = ln_d.len();
    match kernel {
        Kernel::One => None,
        Kernel::Exact => {
            let ln_s = ln_s.to_vec();
            let ln_d = ln_d.to_vec();
            Some(Box::new(move |m, n, j, k| {
                c(beta0_transform(ln_d[j] - ln_d[k] - ln_s[m] + ln_s[n]))
            }))
        }
        Kernel::Nodes(nodes) => {
            let nt = nodes.len();
            // G[(m,n),(j,k)] = Σ_t w_t e^{i b_mn t} e^{i a_jk t} as a matmul.
            let eb = Mat::from_fn(ds * ds, nt, |row, ti| {
                let (m, n) = (row % ds, row / ds);
                if !(s_ok[m] && s_ok[n]) {
                    return ZERO;
                }
                let b = -ln_s[m] + ln_s[n];
                C64::from_polar(nodes[ti].1, b * nodes[ti].0)
            });
            let ea = Mat::from_fn(nt, dk * dk, |ti, col| {
                let (j, k) = (col % dk, col / dk);
                if !(d_ok[j] && d_ok[k]) {
                    return ZERO;
                }
                C64::from_polar(1.0, (ln_d[j] - ln_d[k]) * nodes[ti].0)
            });
            let g = linalg::mul(&eb, &ea);
            Some(Box::new(move |m, n, j, k| g[(m + ds * n, j + dk * k)]))
        }
    }
}

/// `‖R[Tr_erase ρ] − ρ‖_1` for a recovery map whose support is inside `ρ`.
pub fn recovery_error(map: &RecoveryMap, rho: &DenseState) -> Result<f64> {
    map.apply(rho)?.trace_distance(rho)
}

/// Superoperator distance (max abs entry difference of the preparation maps).
pub fn map_distance(a: &RecoveryMap, b: &RecoveryMap) -> f64 {
    if a.gate.map.shape() != b.gate.map.shape() {
        return f64::INFINITY;
    }
    (&a.gate.map - &b.gate.map).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qcore::info::cmi;
    use crate::qcore::linalg::ONE;
    use crate::qcore::operator::{DenseOperator, STATE_TOL};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_state(seed: u64, labels: &[usize]) -> DenseState {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = linalg::random_density(&mut rng, 1 << labels.len());
        DenseState::certify(DenseOperator::new(m, labels.to_vec()).unwrap(), STATE_TOL).unwrap()
    }

    /// Direct formula `σ^{1/2} (σ_K^{-1/2} Y σ_K^{-1/2} ⊗ I) σ^{1/2}`.
    fn petz_direct(sigma: &DenseState, kept: &[usize], erase: &[usize], y: &Mat) -> Mat {
        let mut order = kept.to_vec();
        order.extend_from_slice(erase);
        let s = sigma.op.reorder(&order).unwrap().mat;
        let sk = sigma.op.partial_trace(kept).unwrap().mat;
        let sh = linalg::matrix_function(&s, linalg::MatFn::Power(0.5), PINV_REL).unwrap();
        let ki = linalg::matrix_function(&sk, linalg::MatFn::Power(-0.5), PINV_REL).unwrap();
        let inner = linalg::kron(&linalg::mul(&linalg::mul(&ki, y), &ki), &linalg::identity(1 << erase.len()));
        linalg::mul(&linalg::mul(&sh, &inner), &sh)
    }

    #[test]
    fn beta0_values() {
        assert!((beta0(0.0) - PI / 4.0).abs() < 1e-15);
        for t in [0.5, 1.0, 2.0] {
            assert_eq!(beta0(t), beta0(-t));
        }
        let q = Quadrature::Trapezoid { window: 12.0, nodes: 401 };
        assert!((q.raw_mass() - 1.0).abs() < 1e-8);
        assert!(Quadrature::default().truncation_error() < 1e-15);
    }

    #[test]
    fn transform_matches_quadrature() {
        let q = Quadrature::Trapezoid { window: 12.0, nodes: 481 }.nodes().unwrap();
        for om in [0.0, 0.3, 1.7, 5.0] {
            let s: f64 = q.iter().map(|(t, w)| w * (om * t).cos()).sum();
            assert!((s - beta0_transform(om)).abs() < 1e-10, "{om}: {s}");
        }
    }

    #[test]
    fn plain_petz_matches_direct_formula() {
        let sigma = random_state(3, &[0, 1, 2]);
        let map = petz_map(&sigma, &[2], 0.0).unwrap();
        map.gate.certify().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let y = linalg::random_density(&mut rng, 4);
        let got = map.gate.apply_on_support(&linalg::kron(&y, &linalg::identity(2).scale(0.5))).unwrap();
        let want = petz_direct(&sigma, &[0, 1], &[2], &y);
        assert!((got - want).norm() < 1e-10);
    }

    #[test]
    fn rotated_petz_matches_direct_formula() {
        let sigma = random_state(5, &[0, 1]);
        let t = 0.7;
        let map = petz_map(&sigma, &[0], t).unwrap();
        map.gate.certify().unwrap();
        let s = sigma.op.reorder(&[1, 0]).unwrap().mat;
        let sk = sigma.op.partial_trace(&[1]).unwrap().mat;
        let pw = |a: &Mat, re: f64, im: f64| {
            let (e, v) = linalg::eigh(a);
            linalg::spectral_apply(&e, &v, |x| (C64::new(re, im) * c(x.ln())).exp())
        };
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let y = linalg::random_density(&mut rng, 2);
        let inner = linalg::mul(&linalg::mul(&pw(&sk, -0.5, t), &y), &pw(&sk, -0.5, -t));
        let want = linalg::mul(&linalg::mul(&pw(&s, 0.5, -t), &linalg::kron(&inner, &linalg::identity(2))), &pw(&s, 0.5, t));
        let got = map.gate.apply_on_support(&linalg::kron(&y, &linalg::identity(2).scale(0.5))).unwrap();
        assert!((got - want).norm() < 1e-10);
    }

    #[test]
    fn single_node_equals_plain() {
        let sigma = random_state(7, &[0, 1, 2]);
        let a = petz_map(&sigma, &[0], 0.0).unwrap();
        let b = twirled_petz(&sigma, &[0], &Quadrature::Nodes { nodes: vec![0.0], weights: vec![1.0] }).unwrap();
        assert!(map_distance(&a, &b) < 1e-12);
    }

    #[test]
    fn product_reference_recovers_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let ra = linalg::random_density(&mut rng, 2);
        let rbc = linalg::random_density(&mut rng, 4);
        let sigma = DenseState::certify(DenseOperator::new(linalg::kron(&ra, &rbc), vec![0, 1, 2]).unwrap(), STATE_TOL).unwrap();
        let map = twirled_petz(&sigma.marginal(&[0, 1]).unwrap(), &[0], &Quadrature::default()).unwrap();
        assert!(recovery_error(&map, &sigma).unwrap() < 1e-9);
    }

    #[test]
    fn twirled_is_cptp_and_converged() {
        let sigma = random_state(9, &[0, 1, 2]);
        let a = twirled_petz(&sigma, &[2], &Quadrature::default()).unwrap();
        a.gate.certify().unwrap();
        let b = twirled_petz(&sigma, &[2], &Quadrature::Trapezoid { window: 12.0, nodes: 481 }).unwrap();
        let e = twirled_petz(&sigma, &[2], &Quadrature::Exact).unwrap();
        assert!(map_distance(&a, &b) < 1e-6);
        assert!(map_distance(&a, &e) < 1e-6);
    }

    #[test]
    fn singular_marginal_is_completed() {
        // Pure kept marginal: σ = |0⟩⟨0| ⊗ τ.
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let tau = linalg::random_density(&mut rng, 2);
        let mut p0 = Mat::zeros(2, 2);
        p0[(0, 0)] = ONE;
        let sigma = DenseState::certify(DenseOperator::new(linalg::kron(&p0, &tau), vec![0, 1]).unwrap(), STATE_TOL).unwrap();
        let map = petz_map(&sigma, &[1], 0.0).unwrap();
        assert_eq!(map.null_directions, 1);
        assert!(map.conditioning_warning().is_some());
        map.gate.certify().unwrap();
        assert!(recovery_error(&map, &sigma).unwrap() < 1e-10);
    }

    #[test]
    fn fidelity_bound_random() {
        for seed in 0..10 {
            let rho = random_state(100 + seed, &[0, 1, 2]);
            let i = cmi(&rho, &[0], &[1], &[2]).unwrap();
            let map = twirled_petz(&rho.marginal(&[1, 2]).unwrap(), &[2], &Quadrature::default()).unwrap();
            let out = map.apply(&rho.marginal(&[0, 1]).unwrap()).unwrap();
            let f = crate::qcore::info::fidelity(&rho, &out).unwrap();
            assert!(-2.0 * f.log2() <= i + 1e-6);
        }
    }
}
