//! Labelled qubit operators and certified states.
//!
//! Label `labels[p]` owns bit `n - 1 - p` of a basis index, so the first label
//! is the most significant tensor factor (the usual `kron` order).

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::linalg::{self, Mat, C64, ZERO};
use crate::error::{GlabError, Result};

/// Tolerance used when certifying freshly constructed states.
pub const STATE_TOL: f64 = 1e-10;
/// Looser tolerance after long channel compositions.
pub const STATE_TOL_LOOSE: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq)]
pub struct DenseOperator {
    pub mat: Mat,
    pub labels: Vec<usize>,
}

fn check_labels(labels: &[usize]) -> Result<()> {
    let mut seen = labels.to_vec();
    seen.sort_unstable();
    if seen.windows(2).any(|w| w[0] == w[1]) {
        return Err(GlabError::Label(format!("duplicate labels in {labels:?}")));
    }
    Ok(())
}

/// For each index over `sub` (ordered), the bits it contributes to an index
/// over `full`.
pub(crate) fn scatter_table(sub: &[usize], full: &[usize]) -> Vec<usize> {
    let n = full.len();
    let pos: Vec<usize> = sub
        .iter()
        .map(|s| full.iter().position(|f| f == s).expect("label present"))
        .collect();
    let k = sub.len();
    (0..1usize << k)
        .map(|a| {
            let mut idx = 0usize;
            for (q, &p) in pos.iter().enumerate() {
                if (a >> (k - 1 - q)) & 1 == 1 {
                    idx |= 1 << (n - 1 - p);
                }
            }
            idx
        })
        .collect()
}

impl DenseOperator {
    pub fn new(mat: Mat, labels: Vec<usize>) -> Result<Self> {
        check_labels(&labels)?;
        let d = 1usize << labels.len();
        if mat.nrows() != d || mat.ncols() != d {
            return Err(GlabError::Label(format!(
                "matrix is {}x{} but {} labels need dimension {d}",
                mat.nrows(),
                mat.ncols(),
                labels.len()
            )));
        }
        Ok(Self { mat, labels })
    }

    pub fn identity(labels: &[usize]) -> Self {
        let d = 1usize << labels.len();
        Self { mat: linalg::identity(d), labels: labels.to_vec() }
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn n_sites(&self) -> usize {
        self.labels.len()
    }

    pub fn trace(&self) -> C64 {
        linalg::trace(&self.mat)
    }

    pub fn dagger(&self) -> Self {
        Self { mat: self.mat.adjoint(), labels: self.labels.clone() }
    }

    pub fn scale(&self, s: f64) -> Self {
        Self { mat: self.mat.scale(s), labels: self.labels.clone() }
    }

    pub fn has_labels(&self, sites: &[usize]) -> bool {
        sites.iter().all(|s| self.labels.contains(s))
    }

    fn require(&self, sites: &[usize]) -> Result<()> {
        match sites.iter().find(|s| !self.labels.contains(s)) {
            Some(s) => Err(GlabError::Label(format!("site {s} not in {:?}", self.labels))),
            None => Ok(()),
        }
    }

    /// Same operator expressed with the tensor factors in `order`.
    pub fn reorder(&self, order: &[usize]) -> Result<Self> {
        if order == self.labels.as_slice() {
            return Ok(self.clone());
        }
        if order.len() != self.labels.len() {
            return Err(GlabError::Label(format!("{order:?} is not a permutation of {:?}", self.labels)));
        }
        check_labels(order)?;
        self.require(order)?;
        let table = scatter_table(order, &self.labels);
        let d = self.dim();
        let mat = Mat::from_fn(d, d, |i, j| self.mat[(table[i], table[j])]);
        Ok(Self { mat, labels: order.to_vec() })
    }

    /// Tensor with identity on the missing sites and express on `full`.
    pub fn embed(&self, full: &[usize]) -> Result<Self> {
        check_labels(full)?;
        if let Some(s) = self.labels.iter().find(|s| !full.contains(s)) {
            return Err(GlabError::Label(format!("site {s} not in target {full:?}")));
        }
        if self.labels.len() == full.len() {
            return self.reorder(full);
        }
        let rest: Vec<usize> = full.iter().copied().filter(|s| !self.labels.contains(s)).collect();
        let t_op = scatter_table(&self.labels, full);
        let t_rest = scatter_table(&rest, full);
        let d = 1usize << full.len();
        let mut mat = Mat::zeros(d, d);
        for &r in &t_rest {
            for (b, &jb) in t_op.iter().enumerate() {
                for (a, &ia) in t_op.iter().enumerate() {
                    mat[(ia | r, jb | r)] = self.mat[(a, b)];
                }
            }
        }
        Ok(Self { mat, labels: full.to_vec() })
    }

    /// `op · self` for `op` acting on a subset of the labels, without embedding.
    pub fn left_mul_local(&self, op: &DenseOperator) -> Result<Self> {
        self.require(&op.labels)?;
        let t = scatter_table(&op.labels, &self.labels);
        let mask = t.iter().fold(0usize, |m, &x| m | x);
        let d = self.dim();
        let mut local = vec![0usize; d];
        for (a, &ta) in t.iter().enumerate() {
            for (i, slot) in local.iter_mut().enumerate() {
                if i & mask == ta {
                    *slot = a;
                }
            }
        }
        let xs = self.mat.as_slice();
        let mut out = Mat::zeros(d, d);
        for j in 0..d {
            for i in 0..d {
                let rest = i & !mask;
                let a = local[i];
                let mut acc = ZERO;
                for (b, &tb) in t.iter().enumerate() {
                    let h = op.mat[(a, b)];
                    if h != ZERO {
                        acc += h * xs[(tb | rest) + d * j];
                    }
                }
                out[(i, j)] = acc;
            }
        }
        Ok(Self { mat: out, labels: self.labels.clone() })
    }

    /// Partial trace keeping `keep` in the given order.
    pub fn partial_trace(&self, keep: &[usize]) -> Result<Self> {
        check_labels(keep)?;
        self.require(keep)?;
        let traced: Vec<usize> = self.labels.iter().copied().filter(|s| !keep.contains(s)).collect();
        let tk = scatter_table(keep, &self.labels);
        let te = scatter_table(&traced, &self.labels);
        let dk = tk.len();
        let mut mat = Mat::zeros(dk, dk);
        for b in 0..dk {
            for a in 0..dk {
                let mut acc = ZERO;
                for &e in &te {
                    acc += self.mat[(tk[a] | e, tk[b] | e)];
                }
                mat[(a, b)] = acc;
            }
        }
        Ok(Self { mat, labels: keep.to_vec() })
    }

    /// Product of two operators on possibly different label sets; the result
    /// lives on the union (self's labels first).
    pub fn compose(&self, other: &Self) -> Result<Self> {
        let full = union_labels(&self.labels, &other.labels);
        let a = self.embed(&full)?;
        let b = other.embed(&full)?;
        Ok(Self { mat: linalg::mul(&a.mat, &b.mat), labels: full })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        let b = other.embed(&self.labels)?;
        Ok(Self { mat: &self.mat + &b.mat, labels: self.labels.clone() })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        let b = other.embed(&self.labels)?;
        Ok(Self { mat: &self.mat - &b.mat, labels: self.labels.clone() })
    }

    /// `Tr(self * other)` with `other` embedded on self's labels.
    pub fn expectation(&self, observable: &Self) -> Result<C64> {
        let o = observable.embed(&self.labels)?;
        let mut acc = ZERO;
        for i in 0..self.dim() {
            for j in 0..self.dim() {
                acc += self.mat[(i, j)] * o.mat[(j, i)];
            }
        }
        Ok(acc)
    }

    pub fn trace_norm(&self) -> f64 {
        linalg::trace_norm(&self.mat)
    }

    /// `||self - other||_1` after aligning labels.
    pub fn trace_distance(&self, other: &Self) -> Result<f64> {
        let b = other.reorder(&self.labels)?;
        Ok(linalg::trace_norm(&(&self.mat - &b.mat)))
    }

    /// SHA-256 over labels and the little-endian matrix bytes.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for l in &self.labels {
            h.update((*l as u64).to_le_bytes());
        }
        for j in 0..self.dim() {
            for i in 0..self.dim() {
                // Row-major to match the on-disk format.
                let z = self.mat[(j, i)];
                h.update(z.re.to_le_bytes());
                h.update(z.im.to_le_bytes());
            }
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Binary format: magic `GLOP`, u32 label count, u64 labels, then the
    /// matrix row-major as little-endian `(re, im)` f64 pairs.
    pub fn write_binary<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(b"GLOP")?;
        w.write_all(&(self.labels.len() as u32).to_le_bytes())?;
        for l in &self.labels {
            w.write_all(&(*l as u64).to_le_bytes())?;
        }
        for i in 0..self.dim() {
            for j in 0..self.dim() {
                let z = self.mat[(i, j)];
                w.write_all(&z.re.to_le_bytes())?;
                w.write_all(&z.im.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let io = |e: std::io::Error| GlabError::Config(format!("operator read: {e}"));
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(io)?;
        if &magic != b"GLOP" {
            return Err(GlabError::Config("bad operator magic".into()));
        }
        let mut b4 = [0u8; 4];
        r.read_exact(&mut b4).map_err(io)?;
        let n = u32::from_le_bytes(b4) as usize;
        if n > 16 {
            return Err(GlabError::Resource(format!("{n} labels in operator file")));
        }
        let mut b8 = [0u8; 8];
        let mut labels = Vec::with_capacity(n);
        for _ in 0..n {
            r.read_exact(&mut b8).map_err(io)?;
            labels.push(u64::from_le_bytes(b8) as usize);
        }
        let d = 1usize << n;
        let mut mat = Mat::zeros(d, d);
        for i in 0..d {
            for j in 0..d {
                r.read_exact(&mut b8).map_err(io)?;
                let re = f64::from_le_bytes(b8);
                r.read_exact(&mut b8).map_err(io)?;
                let im = f64::from_le_bytes(b8);
                mat[(i, j)] = C64::new(re, im);
            }
        }
        Self::new(mat, labels)
    }
}

pub fn union_labels(a: &[usize], b: &[usize]) -> Vec<usize> {
    let mut out = a.to_vec();
    out.extend(b.iter().copied().filter(|s| !a.contains(s)));
    out
}

/// Certification summary attached to every [`DenseState`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateCert {
    pub hermiticity: f64,
    pub min_eigenvalue: f64,
    pub trace_defect: f64,
}

impl StateCert {
    pub fn passes(&self, tol: f64) -> bool {
        self.hermiticity < tol && self.min_eigenvalue > -tol && self.trace_defect < tol
    }
}

/// A density matrix whose state properties have been checked.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseState {
    pub op: DenseOperator,
    pub cert: StateCert,
}

impl DenseState {
    pub fn certify(op: DenseOperator, tol: f64) -> Result<Self> {
        let herm = linalg::hermiticity_defect(&op.mat);
        let min_eig = linalg::eigvalsh(&op.mat).first().copied().unwrap_or(0.0);
        let tr = (op.trace() - 1.0).norm();
        let cert = StateCert { hermiticity: herm, min_eigenvalue: min_eig, trace_defect: tr };
        if !cert.passes(tol) {
            return Err(GlabError::Numerical(format!("state certification failed: {cert:?}")));
        }
        Ok(Self { op, cert })
    }

    /// Wrap without the eigenvalue check; hermiticity and trace are still
    /// verified. Used inside hot loops where positivity follows from CPTP.
    pub fn trusted(op: DenseOperator) -> Result<Self> {
        let herm = linalg::hermiticity_defect(&op.mat);
        let tr = (op.trace() - 1.0).norm();
        if herm > STATE_TOL_LOOSE || tr > STATE_TOL_LOOSE {
            return Err(GlabError::Numerical(format!(
                "state lost hermiticity ({herm:.2e}) or trace ({tr:.2e})"
            )));
        }
        Ok(Self { op, cert: StateCert { hermiticity: herm, min_eigenvalue: f64::NAN, trace_defect: tr } })
    }

    pub fn maximally_mixed(labels: &[usize]) -> Self {
        let d = 1usize << labels.len();
        let op = DenseOperator::identity(labels).scale(1.0 / d as f64);
        Self { op, cert: StateCert { hermiticity: 0.0, min_eigenvalue: 1.0 / d as f64, trace_defect: 0.0 } }
    }

    /// Pure state from a ket in the label order.
    pub fn pure(ket: &[C64], labels: &[usize]) -> Result<Self> {
        let v = nalgebra::DVector::from_column_slice(ket);
        let v = v.unscale(v.norm());
        let op = DenseOperator::new(&v * v.adjoint(), labels.to_vec())?;
        Self::certify(op, STATE_TOL)
    }

    pub fn labels(&self) -> &[usize] {
        &self.op.labels
    }

    pub fn mat(&self) -> &Mat {
        &self.op.mat
    }

    pub fn marginal(&self, keep: &[usize]) -> Result<Self> {
        let op = self.op.partial_trace(keep)?;
        Ok(Self { op, cert: self.cert })
    }

    pub fn trace_distance(&self, other: &Self) -> Result<f64> {
        self.op.trace_distance(&other.op)
    }

    pub fn entropy(&self) -> f64 {
        linalg::entropy_bits(&self.op.mat)
    }

    pub fn hash(&self) -> String {
        self.op.hash()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qcore::linalg::{c, kron, pauli_string, random_density, ONE};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn bell() -> DenseState {
        let s = 0.5f64.sqrt();
        DenseState::pure(&[c(s), ZERO, ZERO, c(s)], &[0, 1]).unwrap()
    }

    #[test]
    fn bell_marginal_is_maximally_mixed() {
        let m = bell().marginal(&[0]).unwrap();
        assert!((m.mat() - linalg::identity(2).scale(0.5)).norm() < 1e-14);
    }

    #[test]
    fn ghz_two_site_marginal() {
        let s = 0.5f64.sqrt();
        let mut ket = vec![ZERO; 8];
        ket[0] = c(s);
        ket[7] = c(s);
        let ghz = DenseState::pure(&ket, &[0, 1, 2]).unwrap();
        let m = ghz.marginal(&[0, 1]).unwrap();
        let mut expect = Mat::zeros(4, 4);
        expect[(0, 0)] = c(0.5);
        expect[(3, 3)] = c(0.5);
        assert!((m.mat() - expect).norm() < 1e-14);
    }

    #[test]
    fn product_marginal_recovers_factor() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = random_density(&mut rng, 2);
        let b = random_density(&mut rng, 4);
        let op = DenseOperator::new(kron(&a, &b), vec![0, 1, 2]).unwrap();
        let ma = op.partial_trace(&[0]).unwrap();
        assert!((ma.mat - &a).norm() < 1e-13);
        let mb = op.partial_trace(&[2, 1]).unwrap();
        let b_swapped = DenseOperator::new(b.clone(), vec![1, 2]).unwrap().reorder(&[2, 1]).unwrap();
        assert!((mb.mat - b_swapped.mat).norm() < 1e-13);
    }

    #[test]
    fn embed_and_reorder_agree_with_kron() {
        let zx = pauli_string("ZX");
        let op = DenseOperator::new(pauli_string("Z"), vec![3]).unwrap();
        let full = op.embed(&[3, 5]).unwrap();
        assert!((full.mat - pauli_string("ZI")).norm() < 1e-14);
        let swapped = DenseOperator::new(zx, vec![0, 1]).unwrap().reorder(&[1, 0]).unwrap();
        assert!((swapped.mat - pauli_string("XZ")).norm() < 1e-14);
    }

    #[test]
    fn duplicate_and_unknown_labels_rejected() {
        assert!(DenseOperator::new(linalg::identity(4), vec![1, 1]).is_err());
        let op = DenseOperator::identity(&[0, 1]);
        assert!(op.partial_trace(&[2]).is_err());
    }

    #[test]
    fn binary_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let op = DenseOperator::new(random_density(&mut rng, 4), vec![7, 2]).unwrap();
        let mut buf = Vec::new();
        op.write_binary(&mut buf).unwrap();
        let back = DenseOperator::read_binary(buf.as_slice()).unwrap();
        assert_eq!(back, op);
        assert_eq!(back.hash(), op.hash());
    }

    #[test]
    fn certify_rejects_non_state() {
        let op = DenseOperator::new(linalg::identity(2), vec![0]).unwrap();
        assert!(DenseState::certify(op, STATE_TOL).is_err());
        let neg = DenseOperator::new(pauli_string("Z").scale(1.0) + linalg::identity(2).scale(0.5) * ONE, vec![0]);
        assert!(DenseState::certify(neg.unwrap(), STATE_TOL).is_err());
    }
}
