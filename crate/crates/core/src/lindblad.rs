//! Local Lindbladians: the commuting-Hamiltonian flow between Gibbs states,
//! heat-bath generators with frustration-free Gibbs steady states, dense
//! evolution and the linear-in-time trace bound.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::correlations::{covariance, CovarianceConfig, Restriction};
use crate::error::{GlabError, Result};
use crate::model::{gibbs_state, InteractionFamily};
use crate::qcore::channel::{induced_trace_norm, AffineGate, ChannelGate, GateKind, NormAscent};
use crate::qcore::linalg::{self, c, Mat, C64, ONE};
use crate::qcore::operator::{DenseOperator, DenseState};
use crate::recovery::petz_map;

/// Weights below this are treated as zero and the term is dropped.
pub const DEGENERATE_WEIGHT: f64 = 1e-12;
/// Finite-difference step for `∂_s ρ_s`.
pub const FD_STEP: f64 = 1e-4;
/// Step-halving tolerance of [`flow_integrate`].
pub const FLOW_TOL: f64 = 1e-4;

/// Straight-line coupling path `β(s) = start + s (end − start)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetaPath {
    pub start: Vec<f64>,
    pub end: Vec<f64>,
}

impl BetaPath {
    pub fn new(start: Vec<f64>, end: Vec<f64>) -> Result<Self> {
        if start.len() != end.len() {
            return Err(GlabError::Config("path endpoints have different lengths".into()));
        }
        let p = Self { start, end };
        if let Some(d) = p.derivative().iter().find(|d| d.abs() > 1.0 + 1e-12) {
            return Err(GlabError::Domain(format!("|∂_s β| = {} exceeds 1", d.abs())));
        }
        Ok(p)
    }

    /// Uniform path between two scalar couplings for every term.
    pub fn uniform(n_terms: usize, from: f64, to: f64) -> Result<Self> {
        Self::new(vec![from; n_terms], vec![to; n_terms])
    }

    pub fn at(&self, s: f64) -> Vec<f64> {
        self.start.iter().zip(&self.end).map(|(a, b)| a + s * (b - a)).collect()
    }

    pub fn derivative(&self) -> Vec<f64> {
        self.start.iter().zip(&self.end).map(|(a, b)| b - a).collect()
    }
}

/// One term `L_X = weight · (map + shift · I)` on `support`.
///
/// Jump terms use `shift = −1` with a channel `map`; explicit generators use
/// `shift = 0` with the generator superoperator as `map`.
#[derive(Debug, Clone)]
pub struct LindbladTerm {
    pub support: Vec<usize>,
    pub weight: f64,
    pub shift: f64,
    pub map: ChannelGate,
    pub name: String,
}

impl LindbladTerm {
    pub fn jump(weight: f64, map: ChannelGate, name: impl Into<String>) -> Self {
        Self { support: map.support.clone(), weight, shift: -1.0, map, name: name.into() }
    }

    /// Term from an explicit generator superoperator on `support`.
    pub fn generator(support: Vec<usize>, superop: Mat, name: impl Into<String>) -> Result<Self> {
        let map = ChannelGate::from_superop(support.clone(), superop, GateKind::Custom)?;
        Ok(Self { support, weight: 1.0, shift: 0.0, map, name: name.into() })
    }

    /// `L_X[x]` for an operator whose labels contain the support.
    pub fn apply(&self, x: &DenseOperator) -> Result<DenseOperator> {
        if !x.has_labels(&self.support) {
            return Err(GlabError::Label(format!("term {} support {:?} not in {:?}", self.name, self.support, x.labels)));
        }
        let m = self.map.apply_op(x)?.reorder(&x.labels)?;
        let mat = (m.mat + x.mat.scale(self.shift)).scale(self.weight);
        Ok(DenseOperator { mat, labels: x.labels.clone() })
    }

    /// Superoperator on the support (support order).
    pub fn superoperator(&self) -> Result<Mat> {
        let s = self.map.superoperator()?;
        let d2 = s.nrows();
        Ok((s + linalg::identity(d2).scale(self.shift)).scale(self.weight))
    }

    /// Certified lower bound on `‖L_X‖_{1→1}`.
    pub fn norm_lower_bound<R: Rng + ?Sized>(&self, cfg: NormAscent, rng: &mut R) -> f64 {
        let a = AffineGate { gate: &self.map, a: self.weight, b: self.weight * self.shift };
        induced_trace_norm(&a, cfg, rng)
    }

    /// Crude size estimate used to pick Taylor substeps.
    fn scale_bound(&self) -> f64 {
        if self.shift == -1.0 {
            2.0 * self.weight.abs()
        } else {
            self.weight.abs() * self.map.map.norm()
        }
    }
}

/// Decay profile of the terms; `alpha = None` means strictly local.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuasiLocality {
    pub tag: String,
    pub alpha: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct LocalLindbladian {
    pub n_sites: usize,
    pub terms: Vec<LindbladTerm>,
    /// Declared bound on every `‖L_X‖_{1→1}`.
    pub cap: f64,
    /// Hash of a state every term annihilates, when one is declared.
    pub steady_state: Option<String>,
    pub profile: QuasiLocality,
    /// Terms dropped for degenerate weight, and similar notes.
    pub ledger: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TermDescription {
    pub name: String,
    pub support: Vec<usize>,
    pub kept: Vec<usize>,
    pub weight: f64,
    pub shift: f64,
    pub kind: GateKind,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LindbladDescription {
    pub n_sites: usize,
    pub cap: f64,
    pub steady_state: Option<String>,
    pub profile: QuasiLocality,
    pub terms: Vec<TermDescription>,
    pub ledger: Vec<String>,
}

impl LocalLindbladian {
    pub fn zero(n_sites: usize) -> Self {
        Self {
            n_sites,
            terms: vec![],
            cap: 0.0,
            steady_state: None,
            profile: QuasiLocality { tag: "strict".into(), alpha: None },
            ledger: vec![],
        }
    }

    pub fn labels(&self) -> Vec<usize> {
        (0..self.n_sites).collect()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.iter().all(|t| t.weight == 0.0)
    }

    /// `L[x] = Σ_X L_X[x]`.
    pub fn apply(&self, x: &DenseOperator) -> Result<DenseOperator> {
        let mut out = Mat::zeros(x.dim(), x.dim());
        for t in &self.terms {
            out += t.apply(x)?.mat;
        }
        Ok(DenseOperator { mat: out, labels: x.labels.clone() })
    }

    /// `‖L_X[ρ]‖_1` for every term.
    pub fn term_residuals(&self, rho: &DenseState) -> Result<Vec<f64>> {
        self.terms.iter().map(|t| Ok(linalg::trace_norm(&linalg::hermitize(&t.apply(&rho.op)?.mat)))).collect()
    }

    /// `‖L[ρ]‖_1`.
    pub fn residual(&self, rho: &DenseState) -> Result<f64> {
        Ok(linalg::trace_norm(&linalg::hermitize(&self.apply(&rho.op)?.mat)))
    }

    /// Lower bounds on `‖L_X‖_{1→1}`.
    pub fn term_norms<R: Rng + ?Sized>(&self, cfg: NormAscent, rng: &mut R) -> Vec<f64> {
        self.terms.iter().map(|t| t.norm_lower_bound(cfg, rng)).collect()
    }

    /// `e^{tL}[x]` by a Taylor series on substeps of size at most `0.5 / Σ‖L_X‖`.
    pub fn evolve(&self, x: &DenseOperator, t: f64) -> Result<DenseOperator> {
        if t < 0.0 {
            return Err(GlabError::Domain(format!("negative time {t}")));
        }
        if t == 0.0 || self.is_zero() {
            return Ok(x.clone());
        }
        let bound: f64 = self.terms.iter().map(|t| t.scale_bound()).sum();
        let substeps = ((t * bound / 0.5).ceil() as usize).max(1);
        let h = t / substeps as f64;
        let mut cur = x.clone();
        for _ in 0..substeps {
            cur = self.taylor_step(&cur, h)?;
        }
        Ok(cur)
    }

    fn taylor_step(&self, x: &DenseOperator, h: f64) -> Result<DenseOperator> {
        let mut sum = x.mat.clone();
        let mut term = x.clone();
        let scale = x.mat.norm().max(1e-300);
        for k in 1..=60 {
            let next = self.apply(&term)?;
            term = DenseOperator { mat: next.mat.scale(h / k as f64), labels: x.labels.clone() };
            let tn = term.mat.norm();
            sum += &term.mat;
            if tn < 1e-17 * scale {
                break;
            }
        }
        Ok(DenseOperator { mat: sum, labels: x.labels.clone() })
    }

    /// Dense generator superoperator on all sites (small systems only).
    pub fn superoperator(&self) -> Result<Mat> {
        if self.n_sites > 5 {
            return Err(GlabError::Resource(format!("global superoperator on {} sites", self.n_sites)));
        }
        let labels = self.labels();
        let d = 1usize << self.n_sites;
        let mut s = Mat::zeros(d * d, d * d);
        for q in 0..d {
            for p in 0..d {
                let mut e = Mat::zeros(d, d);
                e[(p, q)] = ONE;
                let out = self.apply(&DenseOperator::new(e, labels.clone())?)?;
                s.set_column(p + d * q, &linalg::vec_col(&out.mat));
            }
        }
        Ok(s)
    }

    /// Smallest Choi eigenvalue and trace defect of `e^{τ L_X}` for each term
    /// with at most `max_sites` sites.
    pub fn term_channel_checks(&self, tau: f64, max_sites: usize) -> Result<Vec<(f64, f64)>> {
        self.terms
            .iter()
            .filter(|t| t.support.len() <= max_sites)
            .map(|t| {
                let e = linalg::expm(&t.superoperator()?.scale(tau));
                Ok(superop_channel_defects(&e))
            })
            .collect()
    }

    pub fn describe(&self) -> LindbladDescription {
        LindbladDescription {
            n_sites: self.n_sites,
            cap: self.cap,
            steady_state: self.steady_state.clone(),
            profile: self.profile.clone(),
            terms: self
                .terms
                .iter()
                .map(|t| TermDescription {
                    name: t.name.clone(),
                    support: t.support.clone(),
                    kept: t.map.kept.clone(),
                    weight: t.weight,
                    shift: t.shift,
                    kind: t.map.kind,
                })
                .collect(),
            ledger: self.ledger.clone(),
        }
    }
}

/// `(min eigenvalue of the Choi matrix, max |Tr E(|j⟩⟨k|) − δ_jk|)`.
pub fn superop_channel_defects(s: &Mat) -> (f64, f64) {
    let d = (s.nrows() as f64).sqrt().round() as usize;
    let mut choi = Mat::zeros(d * d, d * d);
    let mut tp: f64 = 0.0;
    for k in 0..d {
        for j in 0..d {
            let img = linalg::unvec_col(s.column(j + d * k).as_slice(), d);
            let expect = if j == k { 1.0 } else { 0.0 };
            tp = tp.max((linalg::trace(&img) - expect).norm());
            for b in 0..d {
                for a in 0..d {
                    choi[(j * d + a, k * d + b)] = img[(a, b)];
                }
            }
        }
    }
    let min = linalg::eigvalsh(&linalg::hermitize(&choi)).first().copied().unwrap_or(0.0);
    (min, tp)
}

fn require_commuting(family: &InteractionFamily) -> Result<()> {
    let m = family.max_commutator()?;
    if m >= 1e-10 {
        return Err(GlabError::Domain(format!("family is not commuting (commutator norm {m:.2e})")));
    }
    Ok(())
}

fn largest_eigenvalue(h: &Mat) -> f64 {
    linalg::eigvalsh(&linalg::hermitize(h)).last().copied().unwrap_or(0.0)
}

/// Per-term data shared by the generator and its audit.
struct FlowTerm {
    k: usize,
    /// `|∂_s β_Z|`.
    rate: f64,
    /// `λ_Z − ⟨h_Z⟩_s` for the sign-adjusted term.
    gap: f64,
    /// `ρ̃_{s,Z}` on all sites.
    tilde: Mat,
}

fn flow_terms(family: &InteractionFamily, path: &BetaPath, rho: &DenseState) -> Result<Vec<FlowTerm>> {
    let db = path.derivative();
    let d = rho.op.dim();
    let mut out = vec![];
    for (k, &rate) in db.iter().enumerate() {
        if rate == 0.0 {
            continue;
        }
        let sign = rate.signum();
        let h = family.term_op(k).scale(sign);
        let lambda = largest_eigenvalue(&h.mat);
        let mean = rho.op.partial_trace(&h.labels)?.expectation(&h)?.re;
        let gap = lambda - mean;
        let tilde = if gap > DEGENERATE_WEIGHT {
            let hr = rho.op.left_mul_local(&h)?.mat;
            linalg::hermitize(&(rho.mat().scale(lambda) - hr)).unscale(gap)
        } else {
            Mat::zeros(d, d)
        };
        out.push(FlowTerm { k, rate: rate.abs(), gap, tilde });
    }
    Ok(out)
}

/// `L_s = Σ_Z (∂_s β_Z)(λ_Z − ⟨h_Z⟩_s)(M_{s,Z} − I)` with `M_{s,Z}` the
/// plain Petz map of `ρ̃_{s,Z}` on `Z_{+(r+R)}` that erases `Z_{+r}`.
///
/// Negative rates are handled by flipping the sign of `h_Z`.
pub fn theorem4_generator(family: &InteractionFamily, path: &BetaPath, s: f64, r: usize) -> Result<LocalLindbladian> {
    require_commuting(family)?;
    if path.start.len() != family.terms.len() {
        return Err(GlabError::Config("path length does not match the family".into()));
    }
    let rho = gibbs_state(&family.with_beta(path.at(s))?)?;
    theorem4_generator_at(family, path, &rho, r)
}

fn theorem4_generator_at(family: &InteractionFamily, path: &BetaPath, rho: &DenseState, r: usize) -> Result<LocalLindbladian> {
    let lat = &family.lattice;
    let big_r = family.range;
    let terms = flow_terms(family, path, rho)?;
    let labels: Vec<usize> = (0..family.n_sites()).collect();
    let built: Vec<Result<Option<LindbladTerm>>> = terms
        .par_iter()
        .map(|ft| {
            if ft.gap <= DEGENERATE_WEIGHT {
                return Ok(None);
            }
            let z = &family.terms[ft.k].support;
            let zr = lat.dilate(z, r);
            let zrr = lat.dilate(z, r + big_r);
            let tilde = DenseState::trusted(DenseOperator::new(ft.tilde.clone(), labels.clone())?)?;
            let sigma = tilde.marginal(&zrr.sites)?;
            let m = petz_map(&sigma, &zr.sites, 0.0)?;
            Ok(Some(LindbladTerm::jump(ft.rate * ft.gap, m.gate, family.terms[ft.k].name.clone())))
        })
        .collect();
    let mut gen = LocalLindbladian::zero(family.n_sites());
    gen.cap = 4.0;
    gen.profile = QuasiLocality { tag: format!("petz r={r}"), alpha: None };
    for (ft, b) in terms.iter().zip(built) {
        match b? {
            Some(t) => gen.terms.push(t),
            None => gen.ledger.push(format!(
                "term {} dropped: λ − ⟨h⟩ = {:.2e}",
                family.terms[ft.k].name, ft.gap
            )),
        }
    }
    Ok(gen)
}

/// `∂_s ρ_s = Σ_Z (∂_s β_Z) ρ_s (⟨h_Z⟩_s − h_Z)`.
pub fn analytic_derivative(family: &InteractionFamily, path: &BetaPath, s: f64) -> Result<DenseOperator> {
    require_commuting(family)?;
    let rho = gibbs_state(&family.with_beta(path.at(s))?)?;
    let labels: Vec<usize> = (0..family.n_sites()).collect();
    let d = rho.op.dim();
    let mut out = Mat::zeros(d, d);
    for (k, rate) in path.derivative().into_iter().enumerate() {
        if rate == 0.0 {
            continue;
        }
        let h = family.term_op(k);
        let mean = rho.op.partial_trace(&h.labels)?.expectation(&h)?.re;
        let hr = rho.op.left_mul_local(&h)?.mat;
        out += (rho.mat().scale(mean) - hr).scale(rate);
    }
    DenseOperator::new(linalg::hermitize(&out), labels)
}

/// Central difference `(ρ_{s+h} − ρ_{s−h}) / 2h`.
pub fn finite_difference_derivative(family: &InteractionFamily, path: &BetaPath, s: f64, h: f64) -> Result<DenseOperator> {
    let plus = gibbs_state(&family.with_beta(path.at(s + h))?)?;
    let minus = gibbs_state(&family.with_beta(path.at(s - h))?)?;
    let mat = (plus.mat() - minus.mat()).unscale(2.0 * h);
    DenseOperator::new(mat, plus.labels().to_vec())
}

/// Audit of the generator at one point of the path.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Theorem4Point {
    pub s: f64,
    pub r: usize,
    /// `‖∂_s ρ_s − L_s[ρ_s]‖_1` with the finite-difference derivative.
    pub lhs: f64,
    /// `Σ_Z Cov^A_{ρ_s}(Z, complement of Z_{+r})`, upper estimate.
    pub cov_bound: f64,
    /// `Σ_Z |∂_s β_Z| (λ_Z − ⟨h_Z⟩) ‖ρ_s − ρ̃_{s,Z}‖_1` on the complement.
    pub marginal_bound: f64,
    /// `‖analytic − finite difference‖_1`.
    pub derivative_gap: f64,
    /// `‖D_h − D_{2h}‖_1`, the Richardson consistency check.
    pub richardson_gap: f64,
    pub max_term_norm: f64,
    pub n_terms: usize,
    pub dropped: usize,
}

impl Theorem4Point {
    pub fn holds(&self, slack: f64) -> bool {
        self.lhs <= self.cov_bound + slack
    }
}

pub fn theorem4_point<R: Rng + ?Sized>(
    family: &InteractionFamily,
    path: &BetaPath,
    s: f64,
    r: usize,
    cfg: &CovarianceConfig,
    norm_cfg: NormAscent,
    rng: &mut R,
) -> Result<Theorem4Point> {
    require_commuting(family)?;
    let lat = &family.lattice;
    let rho = gibbs_state(&family.with_beta(path.at(s))?)?;
    let gen = theorem4_generator_at(family, path, &rho, r)?;
    let fd = finite_difference_derivative(family, path, s, FD_STEP)?;
    let fd2 = finite_difference_derivative(family, path, s, 2.0 * FD_STEP)?;
    let an = analytic_derivative(family, path, s)?;
    let lr = gen.apply(&rho.op)?;
    let lhs = linalg::trace_norm(&linalg::hermitize(&(&fd.mat - &lr.mat)));
    let derivative_gap = linalg::trace_norm(&linalg::hermitize(&(&fd.mat - &an.mat)));
    let richardson_gap = linalg::trace_norm(&linalg::hermitize(&(&fd.mat - &fd2.mat)));

    let labels: Vec<usize> = (0..family.n_sites()).collect();
    let mut cov_bound = 0.0;
    let mut marginal_bound = 0.0;
    for ft in flow_terms(family, path, &rho)? {
        let z = &family.terms[ft.k].support;
        let outside = lat.complement(&lat.dilate(z, r).sites);
        if outside.is_empty() || ft.gap <= DEGENERATE_WEIGHT {
            continue;
        }
        let est = covariance(&rho, z, &outside, Restriction::Algebra, Some(family), cfg)?;
        cov_bound += est.upper;
        let tilde = DenseOperator::new(ft.tilde.clone(), labels.clone())?;
        let diff = tilde.partial_trace(&outside)?.mat - rho.op.partial_trace(&outside)?.mat;
        marginal_bound += ft.rate * ft.gap * linalg::trace_norm(&linalg::hermitize(&diff));
    }
    let max_term_norm = gen.term_norms(norm_cfg, rng).into_iter().fold(0.0, f64::max);
    Ok(Theorem4Point {
        s,
        r,
        lhs,
        cov_bound,
        marginal_bound,
        derivative_gap,
        richardson_gap,
        max_term_norm,
        n_terms: gen.terms.len(),
        dropped: gen.ledger.len(),
    })
}

/// Result of a time-ordered integration over `s ∈ [0, 1]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FlowRun {
    pub r: usize,
    pub steps: usize,
    /// `‖ρ_1 − T e^{∫L}[ρ_0]‖_1` with `steps` midpoint steps.
    pub error: f64,
    /// Same with `2 · steps`.
    pub error_refined: f64,
    pub non_converged: bool,
    /// `‖ρ_1 − ρ_0‖_1`, the error of doing nothing.
    pub baseline: f64,
}

/// `T e^{∫_0^1 L_s ds}[ρ]` with the midpoint rule on `steps` steps.
pub fn time_ordered(family: &InteractionFamily, path: &BetaPath, r: usize, rho0: &DenseState, steps: usize) -> Result<DenseOperator> {
    if steps == 0 {
        return Err(GlabError::Path("step count must be at least 1".into()));
    }
    require_commuting(family)?;
    let ds = 1.0 / steps as f64;
    let mut cur = rho0.op.clone();
    for k in 0..steps {
        let s = (k as f64 + 0.5) * ds;
        let gen = theorem4_generator(family, path, s, r)?;
        cur = gen.evolve(&cur, ds)?;
    }
    Ok(cur)
}

/// Integrate from `ρ_0` with `steps` and `2 · steps` midpoint steps and compare with `ρ_1`.
pub fn flow_integrate(family: &InteractionFamily, path: &BetaPath, r: usize, steps: usize) -> Result<FlowRun> {
    let rho0 = gibbs_state(&family.with_beta(path.at(0.0))?)?;
    let rho1 = gibbs_state(&family.with_beta(path.at(1.0))?)?;
    let a = time_ordered(family, path, r, &rho0, steps)?;
    let b = time_ordered(family, path, r, &rho0, 2 * steps)?;
    let err = |x: &DenseOperator| linalg::trace_norm(&linalg::hermitize(&(&x.mat - rho1.mat())));
    let (error, error_refined) = (err(&a), err(&b));
    Ok(FlowRun {
        r,
        steps,
        error,
        error_refined,
        non_converged: (error - error_refined).abs() > FLOW_TOL,
        baseline: rho0.trace_distance(&rho1)?,
    })
}

/// Heat-bath generator `L_X = ½ (M_X − I)` for `X` the radius-`radius` ball
/// around each site, where `M_X` resamples `X` from the Gibbs state
/// conditioned on `X_{+R} ∖ X`.
pub fn heatbath_generator(family: &InteractionFamily, radius: usize) -> Result<LocalLindbladian> {
    require_commuting(family)?;
    let lat = &family.lattice;
    let rho = gibbs_state(family)?;
    let mut blocks: Vec<Vec<usize>> = lat.sites().into_iter().map(|i| lat.ball(i, radius).sites).collect();
    blocks.sort();
    blocks.dedup();
    let terms: Vec<Result<LindbladTerm>> = blocks
        .par_iter()
        .map(|x| {
            let env = lat.dilate(x, family.range.max(1));
            let sigma = rho.marginal(&env.sites)?;
            let m = petz_map(&sigma, x, 0.0)?;
            let mut gate = m.gate;
            gate.kind = GateKind::Resample;
            Ok(LindbladTerm::jump(0.5, gate, format!("heatbath{x:?}")))
        })
        .collect();
    let mut gen = LocalLindbladian::zero(family.n_sites());
    gen.terms = terms.into_iter().collect::<Result<_>>()?;
    gen.cap = 1.0;
    gen.steady_state = Some(rho.hash());
    gen.profile = QuasiLocality { tag: format!("heatbath radius={radius}"), alpha: None };
    Ok(gen)
}

/// Verify the declared frustration-free steady state term by term.
pub fn check_frustration_free(gen: &LocalLindbladian, rho: &DenseState, tol: f64) -> Result<Vec<f64>> {
    let res = gen.term_residuals(rho)?;
    if let Some((k, v)) = res.iter().enumerate().find(|(_, v)| **v > tol) {
        return Err(GlabError::Contract(format!("term {} leaves the steady state: {v:.2e}", gen.terms[k].name)));
    }
    Ok(res)
}

/// Both sides of `‖e^{tL}[ρ] − ρ‖_1 ≤ t ‖L[ρ]‖_1`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TraceBound {
    pub t: f64,
    pub lhs: f64,
    pub rhs: f64,
}

impl TraceBound {
    pub fn holds(&self, slack: f64) -> bool {
        self.lhs <= self.rhs + slack
    }
}

pub fn appendix_i_check(gen: &LocalLindbladian, rho: &DenseState, t: f64) -> Result<TraceBound> {
    let ev = gen.evolve(&rho.op, t)?;
    let lhs = linalg::trace_norm(&linalg::hermitize(&(&ev.mat - rho.mat())));
    let rhs = t * gen.residual(rho)?;
    Ok(TraceBound { t, lhs, rhs })
}

/// Same check for an explicit global superoperator, via dense exponentiation.
pub fn appendix_i_dense(l: &Mat, rho: &Mat, t: f64) -> TraceBound {
    let d = rho.nrows();
    let e = linalg::expm(&l.scale(t));
    let out = linalg::unvec_col((e * linalg::vec_col(rho)).as_slice(), d);
    let lr = linalg::unvec_col((l * linalg::vec_col(rho)).as_slice(), d);
    TraceBound {
        t,
        lhs: linalg::trace_norm(&linalg::hermitize(&(out - rho))),
        rhs: t * linalg::trace_norm(&linalg::hermitize(&lr)),
    }
}

/// GKLS generator `−i[H, ·] + Σ_k (J_k · J_k† − ½{J_k†J_k, ·})` as a
/// column-stacking superoperator.
pub fn gkls_superop(h: &Mat, jumps: &[Mat]) -> Mat {
    let d = h.nrows();
    let id = linalg::identity(d);
    let mi = C64::new(0.0, -1.0);
    let mut l = (linalg::kron(&id, h) - linalg::kron(&h.transpose(), &id)) * mi;
    for j in jumps {
        let jdj = linalg::mul(&j.adjoint(), j);
        l += linalg::kron(&j.map(|z| z.conj()), j);
        l -= (linalg::kron(&id, &jdj) + linalg::kron(&jdj.transpose(), &id)) * c(0.5);
    }
    l
}

/// Random GKLS generator on `n` qubits with `jumps` Gaussian jump operators.
pub fn random_lindbladian<R: Rng + ?Sized>(rng: &mut R, n: usize, jumps: usize) -> Mat {
    let d = 1usize << n;
    let h = linalg::random_hermitian(rng, d);
    let js: Vec<Mat> = (0..jumps).map(|_| linalg::random_normal_matrix(rng, d, d).unscale((2.0 * d as f64).sqrt())).collect();
    gkls_superop(&h, &js)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ising_chain, tfim_chain};
    use crate::qcore::linalg::random_density;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn constant_path_gives_zero_generator() {
        let f = ising_chain(4, false, 0.3, 0.0).unwrap();
        let p = BetaPath::uniform(f.terms.len(), 0.3, 0.3).unwrap();
        let g = theorem4_generator(&f, &p, 0.5, 1).unwrap();
        assert!(g.is_zero());
        let rho = gibbs_state(&f).unwrap();
        let out = time_ordered(&f, &p, 1, &rho, 3).unwrap();
        assert_eq!(out.mat, rho.op.mat);
    }

    #[test]
    fn steep_path_and_noncommuting_family_rejected() {
        assert!(BetaPath::uniform(3, 0.0, 1.5).is_err());
        let f = tfim_chain(3, false, 0.3, 1.0).unwrap();
        let p = BetaPath::uniform(f.terms.len(), 0.1, 0.3).unwrap();
        assert!(matches!(theorem4_generator(&f, &p, 0.5, 1), Err(GlabError::Domain(_))));
        assert!(matches!(heatbath_generator(&f, 0), Err(GlabError::Domain(_))));
    }

    #[test]
    fn derivatives_agree_and_residual_is_bounded() {
        let f = ising_chain(6, false, 0.3, 0.2).unwrap();
        let p = BetaPath::new(f.beta.iter().map(|b| b * 0.5).collect(), f.beta.iter().map(|b| b * 1.5).collect()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for r in 0..2 {
            let pt = theorem4_point(&f, &p, 0.4, r, &CovarianceConfig::default(), NormAscent::default(), &mut rng).unwrap();
            assert!(pt.derivative_gap < 1e-7, "{pt:?}");
            assert!(pt.holds(1e-7), "{pt:?}");
            assert!(pt.lhs <= pt.marginal_bound + 1e-7, "{pt:?}");
            assert!(pt.max_term_norm <= 4.0 + 1e-6);
        }
    }

    #[test]
    fn negative_rates_flip_the_term() {
        let f = ising_chain(4, false, 0.5, 0.0).unwrap();
        let p = BetaPath::uniform(f.terms.len(), 0.5, 0.2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pt = theorem4_point(&f, &p, 0.5, 1, &CovarianceConfig::default(), NormAscent::default(), &mut rng).unwrap();
        assert!(pt.holds(1e-7), "{pt:?}");
        let g = theorem4_generator(&f, &p, 0.5, 1).unwrap();
        assert!(g.terms.iter().all(|t| t.weight > 0.0));
    }

    #[test]
    fn flow_reaches_the_target() {
        let f = ising_chain(5, false, 0.2, 0.0).unwrap();
        let p = BetaPath::uniform(f.terms.len(), 0.2, 0.6).unwrap();
        let run = flow_integrate(&f, &p, 1, 32).unwrap();
        assert!(run.error < 0.1 * run.baseline, "{run:?}");
        assert!(!run.non_converged, "{run:?}");
    }

    #[test]
    fn heatbath_fixes_gibbs_state() {
        let f = ising_chain(5, false, 0.7, 0.3).unwrap();
        let g = heatbath_generator(&f, 0).unwrap();
        let rho = gibbs_state(&f).unwrap();
        let res = check_frustration_free(&g, &rho, 1e-9).unwrap();
        assert_eq!(res.len(), 5);
        for (min, tp) in g.term_channel_checks(0.1, 4).unwrap().into_iter().chain(g.term_channel_checks(1.0, 4).unwrap()) {
            assert!(min > -1e-10 && tp < 1e-10, "{min} {tp}");
        }
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        assert!(g.term_norms(NormAscent::default(), &mut rng).iter().all(|&v| v <= 1.0 + 1e-9));
    }

    #[test]
    fn infinite_temperature_heatbath_is_depolarizing() {
        let f = ising_chain(3, false, 0.0, 0.0).unwrap();
        let g = heatbath_generator(&f, 0).unwrap();
        let mix = DenseState::maximally_mixed(&[0, 1, 2]);
        assert!(g.residual(&mix).unwrap() < 1e-12);
        let t = &g.terms[1];
        let x = random_density(&mut ChaCha8Rng::seed_from_u64(4), 8);
        let env = DenseOperator::new(x, vec![0, 1, 2]).unwrap();
        let a = t.map.apply_op(&env).unwrap();
        let b = ChannelGate::depolarizer(vec![1]).apply_op(&env).unwrap();
        assert!((a.mat - b.mat).norm() < 1e-12);
    }

    #[test]
    fn heatbath_long_time_reaches_gibbs() {
        let f = ising_chain(6, false, 0.4, 0.2).unwrap();
        let g = heatbath_generator(&f, 0).unwrap();
        let rho = gibbs_state(&f).unwrap();
        let labels: Vec<usize> = (0..6).collect();
        let mut ket = vec![c(0.0); 64];
        ket[0] = ONE;
        let start = DenseState::pure(&ket, &labels).unwrap();
        let out = g.evolve(&start.op, 60.0).unwrap();
        let z0 = linalg::pauli_string("Z");
        let obs = DenseOperator::new(z0, vec![2]).unwrap().embed(&labels).unwrap();
        let got = out.expectation(&obs).unwrap().re;
        let want = rho.op.expectation(&obs).unwrap().re;
        assert!((got - want).abs() < 1e-4, "{got} vs {want}");
    }

    #[test]
    fn trace_bound_on_random_generators() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let l = random_lindbladian(&mut rng, 2, 2);
            let rho = random_density(&mut rng, 4);
            for t in [0.0, 0.5, 1.0, 2.0] {
                let b = appendix_i_dense(&l, &rho, t);
                assert!(b.holds(1e-8), "{b:?}");
            }
            let e = linalg::expm(&l.scale(0.3));
            let (min, tp) = superop_channel_defects(&e);
            assert!(min > -1e-10 && tp < 1e-10);
        }
    }

    #[test]
    fn local_and_dense_trace_bound_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let l = random_lindbladian(&mut rng, 2, 1);
        let mut g = LocalLindbladian::zero(2);
        g.terms.push(LindbladTerm::generator(vec![0, 1], l.clone(), "random").unwrap());
        let rho = DenseState::certify(DenseOperator::new(random_density(&mut rng, 4), vec![0, 1]).unwrap(), 1e-10).unwrap();
        let a = appendix_i_check(&g, &rho, 1.3).unwrap();
        let b = appendix_i_dense(&l, rho.mat(), 1.3);
        assert!((a.lhs - b.lhs).abs() < 1e-9 && (a.rhs - b.rhs).abs() < 1e-9);
        let z = appendix_i_check(&g, &rho, 0.0).unwrap();
        assert_eq!((z.lhs, z.rhs), (0.0, 0.0));
    }
}
