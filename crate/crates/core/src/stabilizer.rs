//! Exact combinatorics for commuting Pauli Gibbs states.
//!
//! For `H = −Σ_i β_i S_i` with independent commuting generators the Gibbs
//! state factorises as `Π_i (1 + tanh β_i S_i) / 2^n`, so `⟨P⟩` is
//! `phase · Π_{i∈T} tanh β_i` when `P = phase · Π_{i∈T} S_i` and zero
//! otherwise.

use serde::{Deserialize, Serialize};

use crate::error::{GlabError, Result};
use crate::model::{
    gibbs_state, ground_state, toric2d, toric_plaquette, InteractionFamily, Lattice, Term,
};
use crate::qcore::gf2::{self, BitVec};
use crate::qcore::linalg::{self, Mat, C64};
use crate::qcore::operator::DenseOperator;
use crate::qcore::pauli::{self, PauliWord, SparsePauli};

#[derive(Debug, Clone)]
pub struct StabilizerModel {
    pub n: usize,
    pub generators: Vec<PauliWord>,
    pub beta: Vec<f64>,
    /// GF(2) rank of the generator rows; equals the generator count.
    pub rank: usize,
}

/// Serialisable sparse form.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StabilizerSpec {
    pub n: usize,
    pub generators: Vec<SparsePauli>,
    pub beta: Vec<f64>,
}

impl StabilizerModel {
    pub fn new(n: usize, generators: Vec<PauliWord>, beta: Vec<f64>) -> Result<Self> {
        if generators.len() != beta.len() {
            return Err(GlabError::Config("one coefficient per generator required".into()));
        }
        for (i, g) in generators.iter().enumerate() {
            if g.n() != n {
                return Err(GlabError::Label(format!("generator {i} acts on {} qubits, expected {n}", g.n())));
            }
            if !g.is_hermitian() || g.is_identity_up_to_phase() {
                return Err(GlabError::Domain(format!("generator {i} is not a Hermitian non-identity word")));
            }
            if let Some(j) = generators[..i].iter().position(|h| !h.commutes_with(g)) {
                return Err(GlabError::Domain(format!("generators {j} and {i} anticommute")));
            }
        }
        let rows: Vec<BitVec> = generators.iter().map(|g| g.symplectic()).collect();
        let rank = gf2::rank(&rows);
        if rank != generators.len() {
            return Err(GlabError::Domain(format!("generators dependent: rank {rank} < {}", generators.len())));
        }
        Ok(Self { n, generators, beta, rank })
    }

    /// Reads `H = Σ_k β_k c_k P_k` from a family whose terms are single words.
    pub fn from_family(family: &InteractionFamily) -> Result<Self> {
        let n = family.n_sites();
        let mut gens = vec![];
        let mut beta = vec![];
        for (k, t) in family.terms.iter().enumerate() {
            let (w, cf) = pauli::as_single_word(&t.h, &t.support, n)
                .ok_or_else(|| GlabError::Domain(format!("term {} is not a single Pauli word", t.name)))?;
            gens.push(w);
            beta.push(-family.beta[k] * cf);
        }
        Self::new(n, gens, beta)
    }

    /// Family with terms `−S_i` at coefficients `β_i` on `lattice`.
    pub fn to_family(&self, lattice: Lattice) -> Result<InteractionFamily> {
        let terms: Result<Vec<Term>> = self
            .generators
            .iter()
            .enumerate()
            .map(|(i, g)| {
                let sup = g.support();
                Ok(Term { h: -g.to_dense(&sup)?, support: sup, name: format!("S{i}") })
            })
            .collect();
        InteractionFamily::new(lattice, terms?, self.beta.clone(), "stabilizer")
    }

    pub fn to_spec(&self) -> StabilizerSpec {
        StabilizerSpec {
            n: self.n,
            generators: self.generators.iter().map(|g| g.to_sparse()).collect(),
            beta: self.beta.clone(),
        }
    }

    pub fn from_spec(spec: &StabilizerSpec) -> Result<Self> {
        let gens: Result<Vec<PauliWord>> = spec.generators.iter().map(PauliWord::from_sparse).collect();
        Self::new(spec.n, gens?, spec.beta.clone())
    }

    pub fn rows(&self) -> Vec<BitVec> {
        self.generators.iter().map(|g| g.symplectic()).collect()
    }

    /// Product of the generators in `subset`, with exact phase.
    pub fn product(&self, subset: &[usize]) -> PauliWord {
        subset.iter().fold(PauliWord::identity(self.n), |acc, &i| acc.mul(&self.generators[i]))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StabValue {
    pub re: f64,
    pub im: f64,
    /// Generators whose product equals the word up to phase.
    pub subset: Option<Vec<usize>>,
    /// The value carries a non-real phase.
    pub flagged: bool,
}

impl StabValue {
    pub fn value(&self) -> C64 {
        C64::new(self.re, self.im)
    }
}

/// Exact Gibbs expectation of a Pauli word.
pub fn stab_expectation(model: &StabilizerModel, p: &PauliWord) -> StabValue {
    let ph = pauli::i_pow(p.phase);
    if p.is_identity_up_to_phase() {
        return StabValue { re: ph.re, im: ph.im, subset: Some(vec![]), flagged: ph.im != 0.0 };
    }
    let rows = model.rows();
    let Some(a) = gf2::solve_combination(&rows, &p.symplectic()) else {
        return StabValue { re: 0.0, im: 0.0, subset: None, flagged: false };
    };
    let subset = a.ones();
    let prod = model.product(&subset);
    // p = i^{p.phase − prod.phase} · prod.
    let rel = pauli::i_pow((4 + p.phase - prod.phase) % 4);
    let mag: f64 = subset.iter().map(|&i| model.beta[i].tanh()).product();
    let v = rel * mag;
    StabValue { re: v.re, im: v.im, flagged: v.im.abs() > 0.0, subset: Some(subset) }
}

/// Z-type word on the edges where an odd number of the given plaquettes meet.
pub fn plaquette_loop(l: usize, plaquettes: &[(usize, usize)]) -> PauliWord {
    let n = 2 * l * l;
    let mut w = PauliWord::identity(n);
    for &(i, j) in plaquettes {
        for q in toric_plaquette(l, i, j) {
            w.z.flip(q);
        }
    }
    w
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AppendixGReport {
    pub n_a: usize,
    pub n_b: usize,
    pub beta: f64,
    pub beta0: f64,
    /// Stabilizer-engine expectations.
    pub o1: f64,
    pub o2: f64,
    pub o1o2: f64,
    /// Closed forms `(tanh β)^{N_A}`, `(tanh β)^{N_A}(tanh β_0)^{N_B−N_A}`, `(tanh β_0)^{N_B−N_A}`.
    pub o1_formula: f64,
    pub o2_formula: f64,
    pub o1o2_formula: f64,
    pub connected: f64,
    /// `1 − (tanh β)^{2N_A}`.
    pub gap_factor: f64,
    /// `‖ρ_{β_0} − ρ_g.s.‖_1` when a dense evaluation was run.
    pub epsilon: Option<f64>,
    /// Dense `(⟨O_1⟩, ⟨O_2⟩, ⟨O_1O_2⟩)`.
    pub dense: Option<(f64, f64, f64)>,
    pub max_formula_error: f64,
}

impl AppendixGReport {
    /// `(1 − ε)(1 − (tanh β)^{2N_A})` with the measured `ε`.
    pub fn lower_bound(&self) -> Option<f64> {
        self.epsilon.map(|e| (1.0 - e) * self.gap_factor)
    }
}

/// Nested plaquette regions `A ⊂ B` on an `L × L` toric code: plaquettes in
/// `A` at `beta`, all other terms at `beta0`. The last plaquette and star
/// are dropped so the generators are independent; `B` must avoid the
/// dropped plaquette.
pub fn toric2d_appendix_g(
    l: usize,
    region_a: &[(usize, usize)],
    region_b: &[(usize, usize)],
    beta: f64,
    beta0: f64,
    dense: bool,
) -> Result<AppendixGReport> {
    if region_a.iter().any(|p| !region_b.contains(p)) {
        return Err(GlabError::Geometry("loop regions are not nested".into()));
    }
    if region_b.iter().any(|&(i, j)| i >= l || j >= l) {
        return Err(GlabError::Geometry("plaquette outside the torus".into()));
    }
    if region_b.contains(&(l - 1, l - 1)) {
        return Err(GlabError::Geometry("region B uses the dropped plaquette".into()));
    }
    let base = toric2d(l, beta0, beta0, true)?;
    let mut b = base.beta.clone();
    for &(i, j) in region_a {
        b[i * l + j] = beta;
    }
    let fam = base.with_beta(b)?;
    let model = StabilizerModel::from_family(&fam)?;
    let o1w = plaquette_loop(l, region_a);
    let o2w = plaquette_loop(l, region_b);
    let o12w = o1w.mul(&o2w);
    let (na, nb) = (region_a.len() as i32, region_b.len() as i32);
    let (t, t0) = (beta.tanh(), beta0.tanh());
    let o1 = stab_expectation(&model, &o1w).re;
    let o2 = stab_expectation(&model, &o2w).re;
    let o1o2 = stab_expectation(&model, &o12w).re;
    let o1_formula = t.powi(na);
    let o2_formula = t.powi(na) * t0.powi(nb - na);
    let o1o2_formula = t0.powi(nb - na);
    let mut max_err = (o1 - o1_formula).abs().max((o2 - o2_formula).abs()).max((o1o2 - o1o2_formula).abs());
    let (mut eps, mut dense_vals) = (None, None);
    if dense {
        let rho = gibbs_state(&fam)?;
        let labels = rho.labels().to_vec();
        let ev = |w: &PauliWord| -> Result<f64> {
            Ok(linalg::trace(&linalg::mul(rho.mat(), &w.to_dense(&labels)?)).re)
        };
        let d = (ev(&o1w)?, ev(&o2w)?, ev(&o12w)?);
        max_err = max_err.max((d.0 - o1_formula).abs()).max((d.1 - o2_formula).abs()).max((d.2 - o1o2_formula).abs());
        dense_vals = Some(d);
        let uniform = gibbs_state(&base)?;
        let (gs, _) = ground_state(&base, 1e-9)?;
        eps = Some(uniform.trace_distance(&gs)?);
    }
    Ok(AppendixGReport {
        n_a: region_a.len(),
        n_b: region_b.len(),
        beta,
        beta0,
        o1,
        o2,
        o1o2,
        o1_formula,
        o2_formula,
        o1o2_formula,
        connected: o1o2 - o1 * o2,
        gap_factor: 1.0 - t.powi(2 * na),
        epsilon: eps,
        dense: dense_vals,
        max_formula_error: max_err,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AlgebraCheck {
    pub equal: bool,
    /// Dimension over GF(2) of group elements supported in `Ā`.
    pub dim_generated: usize,
    /// Dimension of the span of generators contained in `Ā`.
    pub dim_contained: usize,
    pub n_qubits: usize,
    pub n_generators: usize,
    #[serde(skip)]
    pub witness: Option<PauliWord>,
    pub witness_sparse: Option<SparsePauli>,
}

/// Whether every stabilizer-group element supported outside `region_a` is
/// generated by generators supported outside `region_a`.
pub fn algebra_equality(n: usize, generators: &[PauliWord], region_a: &[usize]) -> AlgebraCheck {
    let rows: Vec<BitVec> = generators.iter().map(|g| g.symplectic()).collect();
    let mut mask = BitVec::zeros(2 * n);
    for &q in region_a {
        mask.set(q, true);
        mask.set(n + q, true);
    }
    let generated = if rows.is_empty() { vec![] } else { gf2::subspace_vanishing_on(&rows, &mask) };
    let contained: Vec<BitVec> = rows.iter().filter(|r| r.and(&mask).is_zero()).cloned().collect();
    let contained = gf2::row_basis(&contained);
    let witness = generated
        .iter()
        .find(|v| contained.is_empty() || gf2::solve_combination(&contained, v).is_none())
        .map(PauliWord::from_symplectic);
    AlgebraCheck {
        equal: witness.is_none(),
        dim_generated: generated.len(),
        dim_contained: contained.len(),
        n_qubits: n,
        n_generators: generators.len(),
        witness_sparse: witness.as_ref().map(|w| w.to_sparse()),
        witness,
    }
}

/// Plaquette-qubit 4D toric code on an `l^4` torus.
#[derive(Debug, Clone)]
pub struct Toric4d {
    pub lattice: Lattice,
    pub n: usize,
    /// `A_s` (Z on the six faces of each 3-cube) followed by `B_c` (X on the
    /// six plaquettes containing each edge).
    pub generators: Vec<PauliWord>,
}

const PAIRS: [(usize, usize); 6] = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)];

fn pair_index(a: usize, b: usize) -> usize {
    let (a, b) = if a < b { (a, b) } else { (b, a) };
    PAIRS.iter().position(|&p| p == (a, b)).expect("distinct directions")
}

impl Toric4d {
    pub fn new(l: usize) -> Result<Self> {
        if l < 3 {
            return Err(GlabError::Geometry("4D toric code needs extent >= 3".into()));
        }
        let lattice = Lattice::new(4, &[l; 4], &[true; 4])?;
        let nv = lattice.n_sites();
        let n = 6 * nv;
        let shift = |v: usize, d: usize, s: isize| -> usize {
            let mut c = lattice.coords(v);
            c[d] = ((c[d] as isize + s).rem_euclid(l as isize)) as usize;
            lattice.index(&c)
        };
        let plaq = |v: usize, a: usize, b: usize| v * 6 + pair_index(a, b);
        let mut gens = vec![];
        for v in 0..nv {
            for omit in 0..4 {
                let dirs: Vec<usize> = (0..4).filter(|&d| d != omit).collect();
                let mut qs = vec![];
                for k in 0..3 {
                    let z = dirs[k];
                    let (a, b) = match k {
                        0 => (dirs[1], dirs[2]),
                        1 => (dirs[0], dirs[2]),
                        _ => (dirs[0], dirs[1]),
                    };
                    qs.push(plaq(v, a, b));
                    qs.push(plaq(shift(v, z, 1), a, b));
                }
                gens.push(PauliWord::z_type(n, &qs));
            }
        }
        for v in 0..nv {
            for a in 0..4 {
                let mut qs = vec![];
                for b in (0..4).filter(|&b| b != a) {
                    qs.push(plaq(v, a, b));
                    qs.push(plaq(shift(v, b, -1), a, b));
                }
                gens.push(PauliWord::x_type(n, &qs));
            }
        }
        Ok(Self { lattice, n, generators: gens })
    }

    /// Qubits on plaquettes whose four corners all lie in `vertices`.
    pub fn plaquettes_within(&self, vertices: &[usize]) -> Vec<usize> {
        let l = self.lattice.extents[0];
        let mut out = vec![];
        for v in 0..self.lattice.n_sites() {
            for (p, &(a, b)) in PAIRS.iter().enumerate() {
                let c = self.lattice.coords(v);
                let corner = |da: usize, db: usize| {
                    let mut x = c.clone();
                    x[a] = (x[a] + da) % l;
                    x[b] = (x[b] + db) % l;
                    self.lattice.index(&x)
                };
                if [corner(0, 0), corner(1, 0), corner(0, 1), corner(1, 1)].iter().all(|q| vertices.contains(q)) {
                    out.push(v * 6 + p);
                }
            }
        }
        out
    }

    /// Vertices of the unit hypercube with lowest corner `origin`.
    pub fn unit_cell(&self, origin: usize) -> Vec<usize> {
        let l = self.lattice.extents[0];
        let c = self.lattice.coords(origin);
        (0..16usize)
            .map(|m| {
                let x: Vec<usize> = (0..4).map(|d| (c[d] + ((m >> d) & 1)) % l).collect();
                self.lattice.index(&x)
            })
            .collect()
    }
}

/// Algebra check for the 4D toric code with `A` the closed unit hypercube
/// at vertex 0.
pub fn toric4d_algebra_check(l: usize) -> Result<AlgebraCheck> {
    let code = Toric4d::new(l)?;
    let ball = code.unit_cell(0);
    let a = code.plaquettes_within(&ball);
    Ok(algebra_equality(code.n, &code.generators, &a))
}

/// 2D toric code on an open `l × l` patch of plaquettes (smooth boundaries),
/// qubits on the edges.
#[derive(Debug, Clone)]
pub struct PlanarCode {
    pub l: usize,
    pub n: usize,
    pub generators: Vec<PauliWord>,
}

impl PlanarCode {
    /// Horizontal edge `(i, j)–(i, j+1)`.
    pub fn h_edge(&self, i: usize, j: usize) -> usize {
        i * self.l + j
    }

    /// Vertical edge `(i, j)–(i+1, j)`.
    pub fn v_edge(&self, i: usize, j: usize) -> usize {
        (self.l + 1) * self.l + i * (self.l + 1) + j
    }

    pub fn plaquette(&self, i: usize, j: usize) -> Vec<usize> {
        vec![self.h_edge(i, j), self.h_edge(i + 1, j), self.v_edge(i, j), self.v_edge(i, j + 1)]
    }

    pub fn new(l: usize) -> Result<Self> {
        if l < 1 {
            return Err(GlabError::Geometry("planar patch needs l >= 1".into()));
        }
        let n = 2 * l * (l + 1);
        let mut code = Self { l, n, generators: vec![] };
        let mut gens = vec![];
        for i in 0..l {
            for j in 0..l {
                gens.push(PauliWord::z_type(n, &code.plaquette(i, j)));
            }
        }
        for i in 0..=l {
            for j in 0..=l {
                let mut qs = vec![];
                if j < l {
                    qs.push(code.h_edge(i, j));
                }
                if j > 0 {
                    qs.push(code.h_edge(i, j - 1));
                }
                if i < l {
                    qs.push(code.v_edge(i, j));
                }
                if i > 0 {
                    qs.push(code.v_edge(i - 1, j));
                }
                gens.push(PauliWord::x_type(n, &qs));
            }
        }
        code.generators = gens;
        Ok(code)
    }

    /// Edges of the given plaquettes.
    pub fn edges_of(&self, plaquettes: &[(usize, usize)]) -> Vec<usize> {
        let mut e: Vec<usize> = plaquettes.iter().flat_map(|&(i, j)| self.plaquette(i, j)).collect();
        e.sort_unstable();
        e.dedup();
        e
    }
}

/// The 2D analogue: `A` the edges of a `k × k` block of plaquettes at
/// `(i0, j0)` on an open `l × l` patch.
pub fn planar_algebra_check(l: usize, i0: usize, j0: usize, k: usize) -> Result<AlgebraCheck> {
    let code = PlanarCode::new(l)?;
    if i0 + k > l || j0 + k > l {
        return Err(GlabError::Geometry("block leaves the patch".into()));
    }
    let block: Vec<(usize, usize)> = (i0..i0 + k).flat_map(|i| (j0..j0 + k).map(move |j| (i, j))).collect();
    let a = code.edges_of(&block);
    Ok(algebra_equality(code.n, &code.generators, &a))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DisorderReport {
    pub region: Vec<usize>,
    /// `‖Tr_X(g_X ρ)‖_1`.
    pub value: f64,
    /// `‖D^sym_X[ρ] − D_X[ρ]‖_1` from the two dense channels.
    pub channel_distance: f64,
}

fn x_string(k: usize) -> Mat {
    linalg::pauli_string(&"X".repeat(k))
}

/// Disorder parameter of the strong Ising symmetry `g = Π X_i` on `X`.
pub fn ising_disorder_parameter(family: &InteractionFamily, region: &[usize]) -> Result<DisorderReport> {
    if region.is_empty() {
        return Err(GlabError::Partition("disorder parameter needs a nonempty region".into()));
    }
    for t in &family.terms {
        let g = x_string(t.support.len());
        let comm = linalg::mul(&t.h, &g) - linalg::mul(&g, &t.h);
        if comm.norm() > 1e-10 {
            return Err(GlabError::Domain(format!("term {} breaks the Ising symmetry", t.name)));
        }
    }
    let rho = gibbs_state(family)?;
    let labels = rho.labels().to_vec();
    let rest: Vec<usize> = labels.iter().copied().filter(|s| !region.contains(s)).collect();
    let gx = DenseOperator::new(x_string(region.len()), region.to_vec())?.embed(&labels)?;
    let grho = DenseOperator::new(linalg::mul(&gx.mat, rho.mat()), labels.clone())?;
    let value = linalg::trace_norm(&grho.partial_trace(&rest)?.mat);

    let dx = 1usize << region.len();
    let pp = (linalg::identity(dx) + x_string(region.len())).scale(0.5);
    let pm = (linalg::identity(dx) - x_string(region.len())).scale(0.5);
    let sector = |p: &Mat| -> Result<Mat> {
        let pe = DenseOperator::new(p.clone(), region.to_vec())?.embed(&labels)?;
        let r = DenseOperator::new(linalg::sandwich(&pe.mat, rho.mat()), labels.clone())?;
        Ok(r.partial_trace(&rest)?.mat)
    };
    let scale = 1.0 / dx as f64;
    let dsym = (linalg::kron(&sector(&pp)?, &pp) + linalg::kron(&sector(&pm)?, &pm)).scale(2.0 * scale);
    let dplain = linalg::kron(&rho.marginal(&rest)?.mat().clone(), &linalg::identity(dx)).scale(scale);
    let channel_distance = linalg::trace_norm(&linalg::hermitize(&(dsym - dplain)));
    Ok(DisorderReport { region: region.to_vec(), value, channel_distance })
}

/// `⟨P⟩` of a word in a dense state on `labels`.
pub fn dense_expectation(rho: &Mat, labels: &[usize], p: &PauliWord) -> Result<C64> {
    Ok(linalg::trace(&linalg::mul(rho, &p.to_dense(labels)?)))
}

/// Uniform random Pauli word on `n` qubits.
pub fn random_word<R: rand::Rng + ?Sized>(rng: &mut R, n: usize) -> PauliWord {
    let mut w = PauliWord::identity(n);
    for q in 0..n {
        let k: u8 = rng.random_range(0..4);
        w.x.set(q, k & 1 == 1);
        w.z.set(q, k & 2 == 2);
    }
    w
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ising_chain, tfim_chain};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_plaquette_parity() {
        let fam = toric2d(2, 1.0, 1.0, true).unwrap();
        let m = StabilizerModel::from_family(&fam).unwrap();
        assert_eq!(m.rank, 6);
        let p = plaquette_loop(2, &[(0, 0)]);
        let v = stab_expectation(&m, &p);
        assert!((v.re - 0.761594155955765).abs() < 1e-12);
        let single = PauliWord::z_type(8, &[0]);
        assert_eq!(stab_expectation(&m, &single).re, 0.0);
        assert_eq!(stab_expectation(&m, &PauliWord::identity(8)).re, 1.0);
    }

    #[test]
    fn matches_dense_on_random_words() {
        let mut fam = toric2d(2, 0.7, 0.4, true).unwrap();
        fam.beta = vec![0.7, -0.3, 1.1, 0.2, 0.5, -0.8];
        let m = StabilizerModel::from_family(&fam).unwrap();
        let rho = gibbs_state(&fam).unwrap();
        let labels = rho.labels().to_vec();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut words: Vec<PauliWord> = (0..100).map(|_| random_word(&mut rng, 8)).collect();
        for k in 0..8usize {
            let subset: Vec<usize> = (0..6).filter(|i| (k * 5 + 3) >> i & 1 == 1).collect();
            words.push(m.product(&subset));
        }
        for w in &words {
            let exact = stab_expectation(&m, w).value();
            let dense = dense_expectation(rho.mat(), &labels, w).unwrap();
            assert!((exact - dense).norm() < 1e-10, "{:?}", w.to_sparse());
        }
    }

    #[test]
    fn appendix_g_small_torus() {
        let r = toric2d_appendix_g(2, &[(0, 0)], &[(0, 0), (0, 1), (1, 0)], 1.0, 3.0, true).unwrap();
        assert!(r.max_formula_error < 1e-10, "{r:?}");
        let lb = r.lower_bound().unwrap();
        assert!(r.connected >= lb, "{r:?}");
        assert!(toric2d_appendix_g(2, &[(0, 1)], &[(0, 0)], 1.0, 1.0, false).is_err());
    }

    #[test]
    fn planar_patch_has_loop_witness() {
        let c = planar_algebra_check(4, 1, 1, 2).unwrap();
        assert!(!c.equal);
        let w = c.witness.unwrap();
        assert!(w.x.is_zero(), "witness should be a Z loop");
        let empty = algebra_equality(8, &StabilizerModel::from_family(&toric2d(2, 1.0, 1.0, true).unwrap()).unwrap().generators, &[]);
        assert!(empty.equal);
    }

    #[test]
    fn toric4d_generators_commute() {
        let code = Toric4d::new(3).unwrap();
        assert_eq!(code.n, 486);
        let gens = &code.generators;
        for i in (0..gens.len()).step_by(7) {
            for g in gens {
                assert!(gens[i].commutes_with(g));
            }
        }
        assert!(gens.iter().all(|g| g.weight() == 6));
    }

    #[test]
    fn toric4d_ball_equality() {
        let c = toric4d_algebra_check(3).unwrap();
        assert!(c.equal, "{c:?}");
        assert!(c.dim_generated > 0);
    }

    #[test]
    fn disorder_parameter() {
        let classical = ising_chain(6, false, 0.8, 0.0).unwrap();
        let r = ising_disorder_parameter(&classical, &[2, 3]).unwrap();
        assert_eq!(r.value, 0.0);
        let tfim = tfim_chain(6, false, 0.8, 0.9).unwrap();
        let mut prev = f64::INFINITY;
        for k in 1..=3 {
            let x: Vec<usize> = (1..1 + k).collect();
            let r = ising_disorder_parameter(&tfim, &x).unwrap();
            assert!((r.value - r.channel_distance).abs() < 1e-9, "{r:?}");
            assert!(r.value < prev);
            prev = r.value;
        }
        let field = ising_chain(4, false, 0.8, 0.5).unwrap();
        assert!(ising_disorder_parameter(&field, &[0]).is_err());
    }
}
