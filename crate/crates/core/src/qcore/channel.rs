//! Channel gates in trace-and-prepare form.
//!
//! A gate on support `S` with input sites `K ⊆ S` acts as
//! `X ↦ T(Tr_{S∖K} X)` where `T: L(H_K) → L(H_S)` is stored as a
//! `d_S² × d_K²` matrix in column-stacking convention. With `K = S` this is
//! an ordinary superoperator; with `K = ∅` it is a replacement channel.

use nalgebra::DVector;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::linalg::{self, Mat, C64, ONE, ZERO};
use super::operator::{scatter_table, DenseOperator, DenseState, STATE_TOL_LOOSE};
use crate::error::{GlabError, Result};

/// Choi positivity tolerance.
pub const CP_TOL: f64 = 1e-8;
/// Trace preservation tolerance.
pub const TP_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GateKind {
    Recovery,
    Depolarize,
    Resample,
    Identity,
    Custom,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelCert {
    pub choi_min_shift_ok: bool,
    pub tp_defect: f64,
}

#[derive(Debug, Clone)]
pub struct ChannelGate {
    pub support: Vec<usize>,
    pub kept: Vec<usize>,
    pub map: Mat,
    pub kind: GateKind,
    /// Free-form provenance, e.g. the reference-state hash of a recovery map.
    pub tag: String,
}

impl ChannelGate {
    pub fn trace_prepare(support: Vec<usize>, kept: Vec<usize>, map: Mat, kind: GateKind) -> Result<Self> {
        if kept.iter().any(|k| !support.contains(k)) {
            return Err(GlabError::Label(format!("kept {kept:?} not inside support {support:?}")));
        }
        let ds = 1usize << support.len();
        let dk = 1usize << kept.len();
        if map.nrows() != ds * ds || map.ncols() != dk * dk {
            return Err(GlabError::Label(format!(
                "map shape {}x{} does not match supports ({ds}, {dk})",
                map.nrows(),
                map.ncols()
            )));
        }
        DenseOperator::new(linalg::identity(ds), support.clone())?;
        Ok(Self { support, kept, map, kind, tag: String::new() })
    }

    pub fn from_superop(support: Vec<usize>, superop: Mat, kind: GateKind) -> Result<Self> {
        Self::trace_prepare(support.clone(), support, superop, kind)
    }

    pub fn from_kraus(support: Vec<usize>, kraus: &[Mat], kind: GateKind) -> Result<Self> {
        let d = 1usize << support.len();
        let mut s = Mat::zeros(d * d, d * d);
        for k in kraus {
            s += linalg::kron(&k.map(|z| z.conj()), k);
        }
        Self::from_superop(support, s, kind)
    }

    pub fn identity(support: Vec<usize>) -> Self {
        let d = 1usize << support.len();
        Self {
            kept: support.clone(),
            support,
            map: linalg::identity(d * d),
            kind: GateKind::Identity,
            tag: String::new(),
        }
    }

    /// `X ↦ Tr(X) · sigma` on the support.
    pub fn replacement(support: Vec<usize>, sigma: &Mat, kind: GateKind) -> Result<Self> {
        let v = linalg::vec_col(sigma);
        let map = Mat::from_column_slice(v.len(), 1, v.as_slice());
        Self::trace_prepare(support, vec![], map, kind)
    }

    pub fn depolarizer(support: Vec<usize>) -> Self {
        let d = 1usize << support.len();
        let sigma = linalg::identity(d).unscale(d as f64);
        Self::replacement(support, &sigma, GateKind::Depolarize).expect("consistent shapes")
    }

    pub fn with_tag(mut self, tag: impl Into<String>) -> Self {
        self.tag = tag.into();
        self
    }

    pub fn d_support(&self) -> usize {
        1 << self.support.len()
    }

    pub fn d_kept(&self) -> usize {
        1 << self.kept.len()
    }

    /// Sites erased before preparation.
    pub fn erased(&self) -> Vec<usize> {
        self.support.iter().copied().filter(|s| !self.kept.contains(s)).collect()
    }

    /// Apply to an operator whose labels contain the kept sites. Erased
    /// sites missing from the input are treated as already traced out and
    /// are appended to the output labels.
    pub fn apply_op(&self, x: &DenseOperator) -> Result<DenseOperator> {
        if !x.has_labels(&self.kept) {
            return Err(GlabError::Label(format!(
                "gate kept sites {:?} not inside state labels {:?}",
                self.kept, x.labels
            )));
        }
        let rest: Vec<usize> = x.labels.iter().copied().filter(|s| !self.support.contains(s)).collect();
        let present: Vec<usize> = self.erased().into_iter().filter(|s| x.labels.contains(s)).collect();
        let mut target = x.labels.clone();
        target.extend(self.support.iter().copied().filter(|s| !x.labels.contains(s)));
        let tk = scatter_table(&self.kept, &x.labels);
        let te = scatter_table(&present, &x.labels);
        let tr = scatter_table(&rest, &x.labels);
        let (dk, dr, ds) = (self.d_kept(), tr.len(), self.d_support());
        let dx = x.dim();
        let xs = x.mat.as_slice();
        let mut ym = Mat::zeros(dk * dk, dr * dr);
        for cp in 0..dr {
            for c in 0..dr {
                let col = c + dr * cp;
                for k in 0..dk {
                    for j in 0..dk {
                        let mut acc = ZERO;
                        for &e in &te {
                            acc += xs[(tk[j] | e | tr[c]) + dx * (tk[k] | e | tr[cp])];
                        }
                        ym[(j + dk * k, col)] = acc;
                    }
                }
            }
        }
        let om = linalg::mul(&self.map, &ym);
        let ts = scatter_table(&self.support, &target);
        let tro = scatter_table(&rest, &target);
        let d = ds * dr;
        let mut out = Mat::zeros(d, d);
        {
            let os = out.as_mut_slice();
            for cp in 0..dr {
                for c in 0..dr {
                    let src = om.column(c + dr * cp);
                    for sp in 0..ds {
                        let colbase = d * (ts[sp] | tro[cp]);
                        for s in 0..ds {
                            os[(ts[s] | tro[c]) + colbase] = src[s + ds * sp];
                        }
                    }
                }
            }
        }
        DenseOperator::new(out, target)
    }

    /// Apply to a state and re-certify hermiticity and trace.
    pub fn apply(&self, state: &DenseState) -> Result<DenseState> {
        let out = self.apply_op(&state.op)?;
        DenseState::trusted(out).map_err(|e| GlabError::Numerical(format!("gate {:?}: {e}", self.kind)))
    }

    /// Heisenberg-picture action on an observable over the support (in
    /// support order).
    pub fn adjoint_on_support(&self, o: &Mat) -> Result<Mat> {
        let ds = self.d_support();
        let dk = self.d_kept();
        let v = linalg::vec_col(o);
        let w = self.map.adjoint() * v;
        let tk = DenseOperator::new(linalg::unvec_col(w.as_slice(), dk), self.kept.clone())?;
        let full = tk.embed(&self.support)?;
        debug_assert_eq!(full.dim(), ds);
        Ok(full.mat)
    }

    /// Schrödinger action restricted to the support (support order).
    pub fn apply_on_support(&self, x: &Mat) -> Result<Mat> {
        let op = DenseOperator::new(x.clone(), self.support.clone())?;
        Ok(self.apply_op(&op)?.mat)
    }

    /// Full `d_S² × d_S²` superoperator. Only sensible for small supports.
    pub fn superoperator(&self) -> Result<Mat> {
        let ds = self.d_support();
        if self.support.len() > 6 {
            return Err(GlabError::Resource(format!("superoperator on {} sites", self.support.len())));
        }
        let mut s = Mat::zeros(ds * ds, ds * ds);
        for q in 0..ds {
            for p in 0..ds {
                let mut e = Mat::zeros(ds, ds);
                e[(p, q)] = ONE;
                let out = self.apply_on_support(&e)?;
                s.set_column(p + ds * q, &linalg::vec_col(&out));
            }
        }
        Ok(s)
    }

    /// Choi matrix of the preparation map, `Σ_jk |j⟩⟨k| ⊗ T(|j⟩⟨k|)`.
    pub fn choi(&self) -> Mat {
        let (dk, ds) = (self.d_kept(), self.d_support());
        let mut j = Mat::zeros(dk * ds, dk * ds);
        for b in 0..dk {
            for a in 0..dk {
                let col = self.map.column(a + dk * b);
                for sp in 0..ds {
                    for s in 0..ds {
                        j[(a * ds + s, b * ds + sp)] = col[s + ds * sp];
                    }
                }
            }
        }
        j
    }

    /// `max_jk |Tr T(|j⟩⟨k|) - δ_jk|`.
    pub fn tp_defect(&self) -> f64 {
        let (dk, ds) = (self.d_kept(), self.d_support());
        let mut worst = 0.0f64;
        for b in 0..dk {
            for a in 0..dk {
                let col = self.map.column(a + dk * b);
                let tr: C64 = (0..ds).map(|s| col[s + ds * s]).sum();
                let target = if a == b { ONE } else { ZERO };
                worst = worst.max((tr - target).norm());
            }
        }
        worst
    }

    /// CP via a Cholesky factorisation of `J + tol·I`, which exists iff the
    /// smallest Choi eigenvalue exceeds `-tol` (up to rounding).
    pub fn is_cp(&self, tol: f64) -> bool {
        let j = linalg::hermitize(&self.choi());
        let n = j.nrows();
        let shifted = j + Mat::identity(n, n).scale(tol);
        linalg::is_positive_definite(&shifted)
    }

    pub fn choi_min_eigenvalue(&self) -> f64 {
        linalg::eigvalsh(&self.choi()).first().copied().unwrap_or(0.0)
    }

    pub fn certify(&self) -> Result<ChannelCert> {
        let tp = self.tp_defect();
        let cp = self.is_cp(CP_TOL);
        if tp > TP_TOL || !cp {
            return Err(GlabError::Numerical(format!(
                "gate {:?} on {:?} fails CPTP: cp={cp} tp_defect={tp:.2e}",
                self.kind, self.support
            )));
        }
        Ok(ChannelCert { choi_min_shift_ok: cp, tp_defect: tp })
    }

    /// Sequential composition `other ∘ self` as one gate on the union of
    /// supports (small supports only).
    pub fn then(&self, other: &ChannelGate) -> Result<ChannelGate> {
        let support = super::operator::union_labels(&self.support, &other.support);
        let d = 1usize << support.len();
        if support.len() > 6 {
            return Err(GlabError::Resource("composition support too large".into()));
        }
        let mut s = Mat::zeros(d * d, d * d);
        for q in 0..d {
            for p in 0..d {
                let mut e = Mat::zeros(d, d);
                e[(p, q)] = ONE;
                let x = DenseOperator::new(e, support.clone())?;
                let y = other.apply_op(&self.apply_op(&x)?)?;
                s.set_column(p + d * q, &linalg::vec_col(&y.mat));
            }
        }
        ChannelGate::from_superop(support, s, GateKind::Custom)
    }
}

/// Linear map on operators of a fixed dimension, with its adjoint.
pub trait LinearMap {
    fn dim(&self) -> usize;
    fn apply(&self, x: &Mat) -> Mat;
    fn adjoint(&self, o: &Mat) -> Mat;
}

/// Explicit superoperator in column-stacking convention.
pub struct SuperOp {
    pub d: usize,
    pub s: Mat,
}

impl LinearMap for SuperOp {
    fn dim(&self) -> usize {
        self.d
    }
    fn apply(&self, x: &Mat) -> Mat {
        let v = &self.s * linalg::vec_col(x);
        linalg::unvec_col(v.as_slice(), self.d)
    }
    fn adjoint(&self, o: &Mat) -> Mat {
        let v = self.s.adjoint() * linalg::vec_col(o);
        linalg::unvec_col(v.as_slice(), self.d)
    }
}

/// `a·G + b·id` restricted to a gate's support.
pub struct AffineGate<'a> {
    pub gate: &'a ChannelGate,
    pub a: f64,
    pub b: f64,
}

impl LinearMap for AffineGate<'_> {
    fn dim(&self) -> usize {
        self.gate.d_support()
    }
    fn apply(&self, x: &Mat) -> Mat {
        self.gate.apply_on_support(x).expect("support-shaped input").scale(self.a) + x.scale(self.b)
    }
    fn adjoint(&self, o: &Mat) -> Mat {
        self.gate.adjoint_on_support(o).expect("support-shaped input").scale(self.a) + o.scale(self.b)
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct NormAscent {
    pub restarts: usize,
    pub iterations: usize,
}

impl Default for NormAscent {
    fn default() -> Self {
        Self { restarts: 4, iterations: 12 }
    }
}

/// Certified lower bound on `||Φ||_{1→1}` for a Hermiticity-preserving map.
///
/// The supremum over Hermitian inputs is attained on pure states, so the
/// ascent alternates between the optimal witness `O = sign Φ(ψψ†)` and the
/// top eigenvector of `Φ†(O)`. Every iterate is an honest evaluation.
pub fn induced_trace_norm<M: LinearMap + ?Sized, R: Rng + ?Sized>(map: &M, cfg: NormAscent, rng: &mut R) -> f64 {
    let d = map.dim();
    let mut best = 0.0f64;
    for r in 0..cfg.restarts.max(1) {
        let mut psi: DVector<C64> = if r == 0 && d > 0 {
            let mut v = DVector::zeros(d);
            v[0] = ONE;
            v
        } else {
            let g = linalg::random_normal_matrix(rng, d, 1);
            DVector::from_column_slice(g.as_slice())
        };
        psi.unscale_mut(psi.norm());
        let mut prev = -1.0;
        for _ in 0..cfg.iterations.max(1) {
            let x = &psi * psi.adjoint();
            let y = linalg::hermitize(&map.apply(&x));
            let val = linalg::trace_norm(&y);
            best = best.max(val);
            if val <= prev + 1e-12 {
                break;
            }
            prev = val;
            let o = linalg::sign_operator(&y);
            let m = linalg::hermitize(&map.adjoint(&o));
            let (vals, vecs) = linalg::eigh(&m);
            let top = vals.len() - 1;
            psi = vecs.column(top).into_owned();
        }
    }
    best
}

/// Monotonicity spot check: `||E[ρ] - E[σ]||_1 ≤ ||ρ - σ||_1`.
pub fn contraction_gap(gate: &ChannelGate, rho: &DenseState, sigma: &DenseState) -> Result<f64> {
    let before = rho.trace_distance(sigma)?;
    let after = gate.apply(rho)?.trace_distance(&gate.apply(sigma)?)?;
    Ok(after - before)
}

/// Re-check a state after a long composition with the loose tolerance.
pub fn recertify(state: DenseState) -> Result<DenseState> {
    DenseState::certify(state.op, STATE_TOL_LOOSE)
}
