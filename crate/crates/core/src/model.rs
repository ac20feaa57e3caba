//! Lattices, regions, partitions, interaction families and Gibbs states.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{GlabError, Result};
use crate::qcore::gf2::{self, BitVec};
use crate::qcore::linalg::{self, c, pauli_string, Mat, ONE, ZERO};
use crate::qcore::pauli::{self, PauliWord};
use crate::qcore::operator::{DenseOperator, DenseState, STATE_TOL};

/// Default cap on the number of qubits for dense Gibbs states.
pub const GIBBS_SITE_CAP: usize = 13;
/// Default cap on the region size for local algebra closure.
pub const ALGEBRA_SITE_CAP: usize = 6;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lattice {
    pub dimension: usize,
    pub extents: Vec<usize>,
    pub periodic: Vec<bool>,
}

pub fn build_lattice(dimension: usize, extents: &[usize], periodic: &[bool]) -> Result<Lattice> {
    Lattice::new(dimension, extents, periodic)
}

impl Lattice {
    pub fn new(dimension: usize, extents: &[usize], periodic: &[bool]) -> Result<Self> {
        if dimension == 0 {
            return Err(GlabError::Geometry("dimension must be at least 1".into()));
        }
        if extents.len() != dimension || periodic.len() != dimension {
            return Err(GlabError::Geometry(format!(
                "{dimension}-dimensional lattice needs {dimension} extents and periodicity flags"
            )));
        }
        if extents.contains(&0) {
            return Err(GlabError::Geometry(format!("zero extent in {extents:?}")));
        }
        Ok(Self { dimension, extents: extents.to_vec(), periodic: periodic.to_vec() })
    }

    pub fn chain(n: usize, periodic: bool) -> Result<Self> {
        Self::new(1, &[n], &[periodic])
    }

    pub fn n_sites(&self) -> usize {
        self.extents.iter().product()
    }

    pub fn sites(&self) -> Vec<usize> {
        (0..self.n_sites()).collect()
    }

    /// Row-major coordinates, last axis fastest.
    pub fn coords(&self, site: usize) -> Vec<usize> {
        let mut rem = site;
        let mut out = vec![0; self.dimension];
        for ax in (0..self.dimension).rev() {
            out[ax] = rem % self.extents[ax];
            rem /= self.extents[ax];
        }
        out
    }

    pub fn index(&self, coords: &[usize]) -> usize {
        coords
            .iter()
            .zip(&self.extents)
            .fold(0, |acc, (&x, &e)| acc * e + x % e)
    }

    /// Graph (Manhattan) distance with periodic wrap where enabled.
    pub fn distance(&self, a: usize, b: usize) -> usize {
        let ca = self.coords(a);
        let cb = self.coords(b);
        (0..self.dimension)
            .map(|ax| {
                let d = ca[ax].abs_diff(cb[ax]);
                if self.periodic[ax] {
                    d.min(self.extents[ax] - d)
                } else {
                    d
                }
            })
            .sum()
    }

    /// `d(X, Y)`; `usize::MAX` when either set is empty.
    pub fn set_distance(&self, x: &[usize], y: &[usize]) -> usize {
        let mut best = usize::MAX;
        for &a in x {
            for &b in y {
                best = best.min(self.distance(a, b));
            }
        }
        best
    }

    pub fn diameter(&self, sites: &[usize]) -> usize {
        let mut best = 0;
        for (i, &a) in sites.iter().enumerate() {
            for &b in &sites[i + 1..] {
                best = best.max(self.distance(a, b));
            }
        }
        best
    }

    pub fn ball(&self, center: usize, r: usize) -> Region {
        let sites = (0..self.n_sites()).filter(|&s| self.distance(center, s) <= r).collect();
        Region::new(self, sites)
    }

    /// `X_{+l} = {y : d(y, X) ≤ l}`.
    pub fn dilate(&self, x: &[usize], l: usize) -> Region {
        let sites = (0..self.n_sites())
            .filter(|&s| x.iter().any(|&a| self.distance(a, s) <= l))
            .collect();
        Region::new(self, sites)
    }

    pub fn complement(&self, x: &[usize]) -> Vec<usize> {
        (0..self.n_sites()).filter(|s| !x.contains(s)).collect()
    }

    /// Maximum number of nearest neighbours of a site.
    pub fn max_degree(&self) -> usize {
        (0..self.n_sites())
            .map(|s| (0..self.n_sites()).filter(|&t| self.distance(s, t) == 1).count())
            .max()
            .unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Region {
    pub sites: Vec<usize>,
    pub diameter: usize,
}

impl Region {
    pub fn new(lattice: &Lattice, sites: Vec<usize>) -> Self {
        let set: BTreeSet<usize> = sites.into_iter().collect();
        let sites: Vec<usize> = set.into_iter().collect();
        let diameter = lattice.diameter(&sites);
        Self { sites, diameter }
    }

    pub fn empty() -> Self {
        Self { sites: vec![], diameter: 0 }
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn contains(&self, s: usize) -> bool {
        self.sites.binary_search(&s).is_ok()
    }

    pub fn contains_all(&self, xs: &[usize]) -> bool {
        xs.iter().all(|&s| self.contains(s))
    }

    pub fn minus(&self, lattice: &Lattice, other: &Region) -> Region {
        Region::new(lattice, self.sites.iter().copied().filter(|&s| !other.contains(s)).collect())
    }

    pub fn union(&self, lattice: &Lattice, other: &Region) -> Region {
        let mut s = self.sites.clone();
        s.extend_from_slice(&other.sites);
        Region::new(lattice, s)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnnulusPartition {
    pub a: Region,
    pub b1: Region,
    pub b2: Region,
    pub c: Region,
    pub r_a: usize,
    pub r_1: usize,
    pub r_2: usize,
}

impl AnnulusPartition {
    pub fn b(&self) -> Vec<usize> {
        let mut s = self.b1.sites.clone();
        s.extend_from_slice(&self.b2.sites);
        s.sort_unstable();
        s
    }

    pub fn ab(&self) -> Vec<usize> {
        let mut s = self.a.sites.clone();
        s.extend(self.b());
        s.sort_unstable();
        s
    }

    pub fn distance_ac(&self, lattice: &Lattice) -> usize {
        lattice.set_distance(&self.a.sites, &self.c.sites)
    }

    /// Every lattice path from A to C passes through B.
    pub fn b_separates(&self, lattice: &Lattice) -> bool {
        let mut seen: BTreeSet<usize> = self.a.sites.iter().copied().collect();
        let mut frontier: Vec<usize> = self.a.sites.clone();
        while let Some(s) = frontier.pop() {
            for t in 0..lattice.n_sites() {
                if lattice.distance(s, t) == 1 && !seen.contains(&t) && !self.b1.contains(t) && !self.b2.contains(t) {
                    if self.c.contains(t) {
                        return false;
                    }
                    seen.insert(t);
                    frontier.push(t);
                }
            }
        }
        true
    }
}

pub fn annulus_partition(lattice: &Lattice, center: usize, r_a: usize, r_1: usize, r_2: usize) -> Result<AnnulusPartition> {
    if center >= lattice.n_sites() {
        return Err(GlabError::Geometry(format!("center {center} outside lattice")));
    }
    for (ax, &p) in lattice.periodic.iter().enumerate() {
        if p && 2 * (r_a + r_1 + r_2) > lattice.extents[ax] {
            return Err(GlabError::Geometry(format!(
                "radii {r_a}+{r_1}+{r_2} exceed half the periodic extent {}",
                lattice.extents[ax]
            )));
        }
    }
    let a = lattice.ball(center, r_a);
    let ab1 = lattice.dilate(&a.sites, r_1);
    let ab = lattice.dilate(&a.sites, r_1 + r_2);
    let b1 = ab1.minus(lattice, &a);
    let b2 = ab.minus(lattice, &ab1);
    let c = Region::new(lattice, lattice.complement(&ab.sites));
    if c.is_empty() {
        return Err(GlabError::Geometry("shells exhaust the lattice, C is empty".into()));
    }
    Ok(AnnulusPartition { a, b1, b2, c, r_a, r_1, r_2 })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Term {
    pub support: Vec<usize>,
    /// Matrix on `support` in the listed order.
    #[serde(skip)]
    pub h: Mat,
    pub name: String,
}

#[derive(Debug, Clone)]
pub struct InteractionFamily {
    pub lattice: Lattice,
    pub terms: Vec<Term>,
    pub beta: Vec<f64>,
    pub range: usize,
    pub name: String,
}

impl InteractionFamily {
    pub fn new(lattice: Lattice, terms: Vec<Term>, beta: Vec<f64>, name: &str) -> Result<Self> {
        if terms.len() != beta.len() {
            return Err(GlabError::Config(format!("{} terms but {} coefficients", terms.len(), beta.len())));
        }
        let mut range = 0;
        for t in &terms {
            if t.support.iter().any(|&s| s >= lattice.n_sites()) {
                return Err(GlabError::Geometry(format!("term {} leaves the lattice", t.name)));
            }
            DenseOperator::new(t.h.clone(), t.support.clone())?;
            if linalg::hermiticity_defect(&t.h) > 1e-12 {
                return Err(GlabError::Domain(format!("term {} is not Hermitian", t.name)));
            }
            let nrm = linalg::op_norm(&t.h);
            if nrm > 1.0 + 1e-12 {
                return Err(GlabError::Domain(format!("term {} has norm {nrm} > 1", t.name)));
            }
            range = range.max(lattice.diameter(&t.support));
        }
        Ok(Self { lattice, terms, beta, range, name: name.to_string() })
    }

    pub fn n_sites(&self) -> usize {
        self.lattice.n_sites()
    }

    pub fn beta_inf(&self) -> f64 {
        self.beta.iter().fold(0.0f64, |m, b| m.max(b.abs()))
    }

    pub fn with_beta(&self, beta: Vec<f64>) -> Result<Self> {
        if beta.len() != self.terms.len() {
            return Err(GlabError::Config("coefficient vector length mismatch".into()));
        }
        let mut f = self.clone();
        f.beta = beta;
        Ok(f)
    }

    pub fn scaled(&self, s: f64) -> Self {
        let mut f = self.clone();
        f.beta.iter_mut().for_each(|b| *b *= s);
        f
    }

    /// Terms per site, the density recorded for arbitrary term lists.
    pub fn term_density(&self) -> f64 {
        self.terms.len() as f64 / self.n_sites() as f64
    }

    pub fn term_op(&self, k: usize) -> DenseOperator {
        DenseOperator { mat: self.terms[k].h.clone(), labels: self.terms[k].support.clone() }
    }

    /// Indices of terms fully contained in `sites`.
    pub fn terms_inside(&self, sites: &[usize]) -> Vec<usize> {
        (0..self.terms.len())
            .filter(|&k| self.terms[k].support.iter().all(|s| sites.contains(s)))
            .collect()
    }

    /// `H_β = Σ β_Z h_Z` on all sites (labels `0..n`).
    pub fn hamiltonian(&self) -> Result<DenseOperator> {
        let n = self.n_sites();
        if n > GIBBS_SITE_CAP {
            return Err(GlabError::Resource(format!("{n} sites exceeds the dense cap {GIBBS_SITE_CAP}")));
        }
        let labels: Vec<usize> = (0..n).collect();
        let d = 1usize << n;
        let mut h = Mat::zeros(d, d);
        for (k, t) in self.terms.iter().enumerate() {
            if self.beta[k] == 0.0 {
                continue;
            }
            let e = DenseOperator { mat: t.h.clone(), labels: t.support.clone() }.embed(&labels)?;
            h += e.mat.scale(self.beta[k]);
        }
        DenseOperator::new(h, labels)
    }

    /// Largest pairwise commutator norm between terms.
    pub fn max_commutator(&self) -> Result<f64> {
        let mut worst = 0.0f64;
        for i in 0..self.terms.len() {
            for j in i + 1..self.terms.len() {
                let a = &self.terms[i];
                let b = &self.terms[j];
                if !a.support.iter().any(|s| b.support.contains(s)) {
                    continue;
                }
                let ab = self.term_op(i).compose(&self.term_op(j))?;
                let ba = self.term_op(j).compose(&self.term_op(i))?.reorder(&ab.labels)?;
                worst = worst.max((ab.mat - ba.mat).norm());
            }
        }
        Ok(worst)
    }

    pub fn is_commuting(&self) -> Result<bool> {
        Ok(self.max_commutator()? < 1e-10)
    }

    /// Default Lieb–Robinson velocity `2 · (max degree) · R · max ||h||`.
    pub fn lieb_robinson_velocity(&self) -> f64 {
        let hmax = self
            .terms
            .iter()
            .enumerate()
            .map(|(k, t)| self.beta[k].abs() * linalg::op_norm(&t.h))
            .fold(0.0, f64::max);
        2.0 * self.lattice.max_degree() as f64 * self.range.max(1) as f64 * hmax
    }
}

fn term(support: Vec<usize>, h: Mat, name: String) -> Term {
    Term { support, h, name }
}

fn bonds(lattice: &Lattice) -> Vec<(usize, usize)> {
    let n = lattice.n_sites();
    let mut out = vec![];
    for a in 0..n {
        for b in a + 1..n {
            if lattice.distance(a, b) == 1 {
                out.push((a, b));
            }
        }
    }
    if lattice.dimension == 1 && lattice.periodic[0] && n == 2 {
        out.dedup();
    }
    out
}

/// Classical Ising chain: `-Z_i Z_{i+1}` at coupling `beta`, optional
/// longitudinal `-Z_i` at `beta * field`.
pub fn ising_chain(n: usize, periodic: bool, beta: f64, field: f64) -> Result<InteractionFamily> {
    let lat = Lattice::chain(n, periodic)?;
    let mut terms = vec![];
    let mut b = vec![];
    for (i, j) in bonds(&lat) {
        terms.push(term(vec![i, j], -pauli_string("ZZ"), format!("ZZ{i},{j}")));
        b.push(beta);
    }
    if field != 0.0 {
        for i in 0..n {
            terms.push(term(vec![i], -pauli_string("Z"), format!("Z{i}")));
            b.push(beta * field);
        }
    }
    InteractionFamily::new(lat, terms, b, "ising_chain")
}

/// Transverse-field Ising chain: `-Z_i Z_{i+1}` at `beta`, `-X_i` at `beta * g`.
pub fn tfim_chain(n: usize, periodic: bool, beta: f64, g: f64) -> Result<InteractionFamily> {
    let lat = Lattice::chain(n, periodic)?;
    let mut terms = vec![];
    let mut b = vec![];
    for (i, j) in bonds(&lat) {
        terms.push(term(vec![i, j], -pauli_string("ZZ"), format!("ZZ{i},{j}")));
        b.push(beta);
    }
    for i in 0..n {
        terms.push(term(vec![i], -pauli_string("X"), format!("X{i}")));
        b.push(beta * g);
    }
    InteractionFamily::new(lat, terms, b, "tfim_chain")
}

/// Heisenberg chain with normalised bond `(XX + YY + ZZ) / 3`.
pub fn heisenberg_chain(n: usize, periodic: bool, beta: f64) -> Result<InteractionFamily> {
    let lat = Lattice::chain(n, periodic)?;
    let mut terms = vec![];
    let mut b = vec![];
    let bond = (pauli_string("XX") + pauli_string("YY") + pauli_string("ZZ")).unscale(3.0);
    for (i, j) in bonds(&lat) {
        terms.push(term(vec![i, j], bond.clone(), format!("H{i},{j}")));
        b.push(beta);
    }
    InteractionFamily::new(lat, terms, b, "heisenberg_chain")
}

/// Edge qubit `(i, j, o)` of an `L × L` torus: `o = 0` joins vertex `(i, j)`
/// to `(i, j+1)`, `o = 1` joins it to `(i+1, j)`.
pub fn toric_edge(l: usize, i: usize, j: usize, o: usize) -> usize {
    ((i % l) * l + (j % l)) * 2 + o
}

/// Star (X-type) support at vertex `(i, j)`.
pub fn toric_star(l: usize, i: usize, j: usize) -> Vec<usize> {
    let mut s = vec![
        toric_edge(l, i, j, 0),
        toric_edge(l, i, j + l - 1, 0),
        toric_edge(l, i, j, 1),
        toric_edge(l, i + l - 1, j, 1),
    ];
    s.sort_unstable();
    s
}

/// Plaquette (Z-type) support with lower-left vertex `(i, j)`.
pub fn toric_plaquette(l: usize, i: usize, j: usize) -> Vec<usize> {
    let mut s = vec![
        toric_edge(l, i, j, 0),
        toric_edge(l, i + 1, j, 0),
        toric_edge(l, i, j, 1),
        toric_edge(l, i, j + 1, 1),
    ];
    s.sort_unstable();
    s
}

/// 2D toric code on an `L × L` torus with terms `-A_p` (plaquettes, listed
/// first) and `-B_s` (stars). Qubits live on the edge lattice
/// `[L, L, 2]`. With `independent`, the last plaquette and last star are
/// dropped so the remaining terms are independent generators.
pub fn toric2d(l: usize, beta_plaquette: f64, beta_star: f64, independent: bool) -> Result<InteractionFamily> {
    if l < 2 {
        return Err(GlabError::Geometry("toric code needs L >= 2".into()));
    }
    let lat = Lattice::new(3, &[l, l, 2], &[true, true, false])?;
    let mut terms = vec![];
    let mut b = vec![];
    let keep = if independent { l * l - 1 } else { l * l };
    for k in 0..keep {
        let (i, j) = (k / l, k % l);
        let sup = toric_plaquette(l, i, j);
        terms.push(term(sup, -pauli_string("ZZZZ"), format!("P{i},{j}")));
        b.push(beta_plaquette);
    }
    for k in 0..keep {
        let (i, j) = (k / l, k % l);
        let sup = toric_star(l, i, j);
        terms.push(term(sup, -pauli_string("XXXX"), format!("S{i},{j}")));
        b.push(beta_star);
    }
    InteractionFamily::new(lat, terms, b, "toric2d")
}

/// Dense Gibbs state together with the Hamiltonian spectrum.
#[derive(Debug, Clone)]
pub struct GibbsData {
    pub state: DenseState,
    pub energies: Vec<f64>,
    pub vectors: Mat,
}

pub fn gibbs_data(family: &InteractionFamily) -> Result<GibbsData> {
    let h = family.hamiltonian()?;
    let (e, v) = linalg::eigh(&h.mat);
    let e0 = e[0];
    let w: Vec<f64> = e.iter().map(|x| (-(x - e0)).exp()).collect();
    let z: f64 = w.iter().sum();
    let rho = linalg::spectral_apply(&e, &v, |x| c((-(x - e0)).exp() / z));
    let op = DenseOperator::new(linalg::hermitize(&rho), h.labels.clone())?;
    let state = DenseState::certify(op, STATE_TOL)?;
    Ok(GibbsData { state, energies: e, vectors: v })
}

/// `ρ_β = e^{-H_β} / Tr e^{-H_β}`.
pub fn gibbs_state(family: &InteractionFamily) -> Result<DenseState> {
    Ok(gibbs_data(family)?.state)
}

/// Normalised projector onto the ground space (energies within `tol`).
pub fn ground_state(family: &InteractionFamily, tol: f64) -> Result<(DenseState, usize)> {
    let g = gibbs_data(family)?;
    let e0 = g.energies[0];
    let k = g.energies.iter().filter(|&&e| e - e0 < tol).count();
    let rho = linalg::spectral_apply(&g.energies, &g.vectors, |x| if x - e0 < tol { c(1.0 / k as f64) } else { ZERO });
    let op = DenseOperator::new(linalg::hermitize(&rho), g.state.labels().to_vec())?;
    Ok((DenseState::certify(op, STATE_TOL)?, k))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BlockPartition {
    pub blocks: Vec<Region>,
    pub centers: Vec<usize>,
    pub overlap: usize,
    pub r_a: usize,
    /// `assignment[k]` is the block owning term `k`.
    pub assignment: Vec<usize>,
}

fn axis_centers(extent: usize, periodic: bool, r_a: usize, step: usize) -> Vec<usize> {
    if periodic {
        let n = extent.div_ceil(step);
        return (0..n).map(|k| (k * step) % extent).collect();
    }
    if 2 * r_a + 1 >= extent {
        return vec![(extent - 1) / 2];
    }
    let last = extent - 1 - r_a;
    let mut out = vec![];
    let mut x = r_a;
    while x < last {
        out.push(x);
        x += step;
    }
    out.push(last);
    out
}

impl BlockPartition {
    /// Terms owned by block `x`.
    pub fn terms_of(&self, x: usize) -> Vec<usize> {
        (0..self.assignment.len()).filter(|&k| self.assignment[k] == x).collect()
    }

    /// Greedy colouring so that blocks in a layer have centres at least
    /// `min_sep` apart. Blocks are visited in lexicographic centre order.
    pub fn layers(&self, lattice: &Lattice, min_sep: usize) -> Vec<Vec<usize>> {
        let mut layers: Vec<Vec<usize>> = vec![];
        for x in 0..self.blocks.len() {
            let slot = layers.iter().position(|layer| {
                layer.iter().all(|&y| lattice.distance(self.centers[x], self.centers[y]) >= min_sep)
            });
            match slot {
                Some(i) => layers[i].push(x),
                None => layers.push(vec![x]),
            }
        }
        layers
    }
}

/// Hypercubic blocks of half-width `r_a` whose neighbours overlap in strips
/// of width `R`; each term goes to the lexicographically smallest containing
/// block centre.
pub fn block_partition(lattice: &Lattice, family: &InteractionFamily, r_a: usize) -> Result<BlockPartition> {
    let r = family.range;
    if 2 * r_a <= r {
        return Err(GlabError::Partition(format!("need 2 r_a > R, got r_a={r_a}, R={r}")));
    }
    let step = 2 * r_a - r;
    let per_axis: Vec<Vec<usize>> = (0..lattice.dimension)
        .map(|ax| axis_centers(lattice.extents[ax], lattice.periodic[ax], r_a, step))
        .collect();
    let mut centers_c: Vec<Vec<usize>> = vec![vec![]];
    for axis in &per_axis {
        centers_c = centers_c
            .into_iter()
            .flat_map(|p| axis.iter().map(move |&x| {
                let mut q = p.clone();
                q.push(x);
                q
            }))
            .collect();
    }
    let mut centers: Vec<usize> = centers_c.iter().map(|c| lattice.index(c)).collect();
    centers.sort_unstable();
    centers.dedup();
    let blocks: Vec<Region> = centers
        .iter()
        .map(|&cidx| {
            let cc = lattice.coords(cidx);
            let sites = (0..lattice.n_sites())
                .filter(|&s| {
                    let sc = lattice.coords(s);
                    (0..lattice.dimension).all(|ax| {
                        let d = sc[ax].abs_diff(cc[ax]);
                        let d = if lattice.periodic[ax] { d.min(lattice.extents[ax] - d) } else { d };
                        d <= r_a
                    })
                })
                .collect();
            Region::new(lattice, sites)
        })
        .collect();
    let mut assignment = Vec::with_capacity(family.terms.len());
    for t in &family.terms {
        let owner = (0..blocks.len()).find(|&x| blocks[x].contains_all(&t.support));
        match owner {
            Some(x) => assignment.push(x),
            None => {
                return Err(GlabError::Partition(format!(
                    "term {} on {:?} fits in no block (r_a={r_a} too small)",
                    t.name, t.support
                )))
            }
        }
    }
    Ok(BlockPartition { blocks, centers, overlap: r, r_a, assignment })
}

#[derive(Debug, Clone)]
pub enum AlgebraBasis {
    /// Every operator on the region.
    Full,
    /// Span of the listed Pauli words (pairwise distinct up to phase).
    Pauli(Vec<PauliWord>),
    /// Hilbert–Schmidt orthonormal matrices on the region.
    Dense(Vec<Mat>),
}

/// Local algebra `A_X`, stored as an orthogonal basis.
#[derive(Debug, Clone)]
pub struct LocalAlgebra {
    pub region: Vec<usize>,
    pub basis: AlgebraBasis,
}

impl LocalAlgebra {
    pub fn full(region: &[usize]) -> Self {
        Self { region: region.to_vec(), basis: AlgebraBasis::Full }
    }

    pub fn dim(&self) -> usize {
        match &self.basis {
            AlgebraBasis::Full => 1usize << (2 * self.region.len()),
            AlgebraBasis::Pauli(w) => w.len(),
            AlgebraBasis::Dense(b) => b.len(),
        }
    }

    pub fn is_full(&self) -> bool {
        self.dim() == 1usize << (2 * self.region.len())
    }

    /// Hilbert–Schmidt orthonormal basis as dense matrices.
    pub fn elements(&self) -> Vec<Mat> {
        match &self.basis {
            AlgebraBasis::Pauli(words) => {
                let d = 1usize << self.region.len();
                words
                    .iter()
                    .map(|w| w.to_dense(&self.region).expect("word inside region").unscale((d as f64).sqrt()))
                    .collect()
            }
            AlgebraBasis::Dense(b) => b.clone(),
            AlgebraBasis::Full => {
                let d = 1usize << self.region.len();
                let mut basis = vec![];
                for j in 0..d {
                    for i in 0..d {
                        let mut e = Mat::zeros(d, d);
                        e[(i, j)] = ONE;
                        basis.push(e);
                    }
                }
                basis
            }
        }
    }

    /// Orthogonal projection onto the algebra. For a unital *-subalgebra this
    /// is the trace-preserving conditional expectation.
    pub fn project(&self, o: &Mat) -> Mat {
        let d = o.nrows();
        let mut out = Mat::zeros(d, d);
        match &self.basis {
            AlgebraBasis::Full => return o.clone(),
            AlgebraBasis::Pauli(words) => {
                for w in words {
                    let cf = w.coefficient(o, &self.region);
                    w.accumulate(&mut out, &self.region, cf);
                }
            }
            AlgebraBasis::Dense(basis) => {
                for b in basis {
                    let coef = b.iter().zip(o.iter()).map(|(x, y)| x.conj() * y).sum::<linalg::C64>();
                    out += b * coef;
                }
            }
        }
        out
    }

    pub fn residual(&self, o: &Mat) -> f64 {
        (o - self.project(o)).norm()
    }

    fn try_add(basis: &mut Vec<Mat>, m: &Mat, tol: f64) -> bool {
        let proj = |o: &Mat| {
            let mut out = Mat::zeros(o.nrows(), o.ncols());
            for b in basis.iter() {
                let coef = b.iter().zip(o.iter()).map(|(x, y)| x.conj() * y).sum::<linalg::C64>();
                out += b * coef;
            }
            out
        };
        let r = m - proj(m);
        let n = r.norm();
        if n > tol * m.norm().max(1.0) {
            let r = r.unscale(n);
            let r2 = &r - proj(&r);
            let n2 = r2.norm();
            basis.push(r2.unscale(n2));
            true
        } else {
            false
        }
    }

    /// Largest residual of pairwise products and adjoints.
    pub fn closure_defect(&self) -> f64 {
        let els = self.elements();
        let mut worst = 0.0f64;
        for a in &els {
            worst = worst.max(self.residual(&a.adjoint()));
            for b in &els {
                worst = worst.max(self.residual(&linalg::mul(a, b)));
            }
        }
        worst
    }

    /// Algebra `A_X ⊗ A_Y` on the concatenated region.
    pub fn tensor(&self, other: &LocalAlgebra) -> Result<LocalAlgebra> {
        if self.region.iter().any(|s| other.region.contains(s)) {
            return Err(GlabError::Partition("tensor of overlapping algebras".into()));
        }
        let mut region = self.region.clone();
        region.extend_from_slice(&other.region);
        let basis = match (&self.basis, &other.basis) {
            (AlgebraBasis::Full, AlgebraBasis::Full) => AlgebraBasis::Full,
            (AlgebraBasis::Pauli(a), AlgebraBasis::Pauli(b)) => {
                AlgebraBasis::Pauli(a.iter().flat_map(|x| b.iter().map(move |y| x.mul(y))).collect())
            }
            _ => {
                let (ea, eb) = (self.elements(), other.elements());
                if ea.len() * eb.len() > 1 << 14 {
                    return Err(GlabError::Resource("dense tensor algebra too large".into()));
                }
                AlgebraBasis::Dense(ea.iter().flat_map(|x| eb.iter().map(move |y| linalg::kron(x, y))).collect())
            }
        };
        Ok(LocalAlgebra { region, basis })
    }
}

/// Pauli words of the terms when every term is a multiple of a single word.
pub fn pauli_generators(family: &InteractionFamily) -> Option<Vec<PauliWord>> {
    let n = family.n_sites();
    family
        .terms
        .iter()
        .map(|t| pauli::as_single_word(&t.h, &t.support, n).map(|p| p.0))
        .collect()
}

/// Basis of the local algebra `A_X` generated by `Tr_{X̄}` of the algebra
/// of the family.
///
/// For Pauli-word families this is exact: `A_X` is spanned by the elements
/// of the generated Pauli group that act trivially outside `X`. Otherwise
/// monomials of up to three terms near `X` are traced to `X` and closed
/// under products and adjoints until the dimension stabilises.
pub fn local_algebra(family: &InteractionFamily, region: &[usize]) -> Result<LocalAlgebra> {
    local_algebra_with_cap(family, region, ALGEBRA_SITE_CAP)
}

pub fn local_algebra_with_cap(family: &InteractionFamily, region: &[usize], cap: usize) -> Result<LocalAlgebra> {
    if region.len() > cap {
        return Err(GlabError::Resource(format!("algebra on {} sites exceeds cap {cap}", region.len())));
    }
    if region.iter().any(|&s| s >= family.n_sites()) {
        return Err(GlabError::Label(format!("region {region:?} outside lattice")));
    }
    if let Some(gens) = pauli_generators(family) {
        return Ok(pauli_local_algebra(family.n_sites(), &gens, region));
    }
    dense_local_algebra(family, region)
}

fn pauli_local_algebra(n: usize, gens: &[PauliWord], region: &[usize]) -> LocalAlgebra {
    let rows: Vec<BitVec> = gens.iter().map(|g| g.symplectic()).collect();
    let mut outside = BitVec::zeros(2 * n);
    for q in 0..n {
        if !region.contains(&q) {
            outside.set(q, true);
            outside.set(n + q, true);
        }
    }
    let sub = if rows.is_empty() { vec![] } else { gf2::subspace_vanishing_on(&rows, &outside) };
    let mut words = vec![PauliWord::identity(n)];
    for v in &sub {
        let w = PauliWord::from_symplectic(v);
        let more: Vec<PauliWord> = words.iter().map(|u| u.mul(&w).with_phase(0)).collect();
        words.extend(more);
    }
    LocalAlgebra { region: region.to_vec(), basis: AlgebraBasis::Pauli(words) }
}

fn dense_local_algebra(family: &InteractionFamily, region: &[usize]) -> Result<LocalAlgebra> {
    let d = 1usize << region.len();
    let mut basis = vec![linalg::identity(d).unscale((d as f64).sqrt())];
    if region.is_empty() {
        return Ok(LocalAlgebra { region: vec![], basis: AlgebraBasis::Dense(basis) });
    }
    let lat = &family.lattice;
    let near = lat.dilate(region, family.range.max(1));
    let local: Vec<usize> = (0..family.terms.len())
        .filter(|&k| family.terms[k].support.iter().any(|s| near.contains(*s)))
        .collect();
    let tol = 1e-10;
    let add_traced = |op: &DenseOperator, basis: &mut Vec<Mat>| -> Result<()> {
        let mut labels = op.labels.clone();
        labels.extend(region.iter().copied().filter(|s| !op.labels.contains(s)));
        let full = op.embed(&labels)?;
        let traced = full.partial_trace(region)?;
        LocalAlgebra::try_add(basis, &traced.mat, tol);
        Ok(())
    };
    let ops: Vec<DenseOperator> = local.iter().map(|&k| family.term_op(k)).collect();
    for a in &ops {
        add_traced(a, &mut basis)?;
    }
    let max_labels = 10;
    for (i, a) in ops.iter().enumerate() {
        for (j, b) in ops.iter().enumerate() {
            if i == j {
                continue;
            }
            let ab = a.compose(b)?;
            if ab.labels.len() <= max_labels {
                add_traced(&ab, &mut basis)?;
            }
            for cc in ops.iter().skip(j + 1) {
                let abc = ab.compose(cc)?;
                if abc.labels.len() <= max_labels {
                    add_traced(&abc, &mut basis)?;
                }
            }
        }
    }
    loop {
        let before = basis.len();
        let snapshot = basis.clone();
        for a in &snapshot {
            LocalAlgebra::try_add(&mut basis, &a.adjoint(), tol);
            for b in &snapshot {
                LocalAlgebra::try_add(&mut basis, &linalg::mul(a, b), tol);
            }
        }
        if basis.len() == before || basis.len() >= d * d {
            break;
        }
    }
    Ok(LocalAlgebra { region: region.to_vec(), basis: AlgebraBasis::Dense(basis) })
}
