//! Pauli words in the binary symplectic representation.

use serde::{Deserialize, Serialize};

use super::gf2::BitVec;
use super::linalg::{self, Mat, C64, ONE, ZERO};
use crate::error::{GlabError, Result};

/// `i^phase · ⊗_q P_q` with `P_q` encoded by `(x_q, z_q)`: `(1,0)=X`,
/// `(0,1)=Z`, `(1,1)=Y`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PauliWord {
    pub x: BitVec,
    pub z: BitVec,
    /// Power of `i`, in `0..4`.
    pub phase: u8,
}

/// Sparse serialisable form: `(qubit, letter)` pairs plus phase.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SparsePauli {
    pub n: usize,
    pub ops: Vec<(usize, char)>,
    pub phase: u8,
}

fn g_exp(x1: bool, z1: bool, x2: bool, z2: bool) -> i32 {
    let (x2, z2) = (x2 as i32, z2 as i32);
    match (x1, z1) {
        (false, false) => 0,
        (true, true) => z2 - x2,
        (true, false) => z2 * (2 * x2 - 1),
        (false, true) => x2 * (1 - 2 * z2),
    }
}

pub fn i_pow(k: u8) -> C64 {
    match k % 4 {
        0 => ONE,
        1 => C64::new(0.0, 1.0),
        2 => C64::new(-1.0, 0.0),
        _ => C64::new(0.0, -1.0),
    }
}

impl PauliWord {
    pub fn identity(n: usize) -> Self {
        Self { x: BitVec::zeros(n), z: BitVec::zeros(n), phase: 0 }
    }

    pub fn n(&self) -> usize {
        self.x.len
    }

    /// Word from a letter per listed qubit, e.g. `(&[0, 3], "ZZ")`.
    pub fn from_letters(n: usize, qubits: &[usize], letters: &str) -> Result<Self> {
        let chars: Vec<char> = letters.chars().collect();
        if chars.len() != qubits.len() {
            return Err(GlabError::Label(format!("{} letters for {} qubits", chars.len(), qubits.len())));
        }
        let mut w = Self::identity(n);
        for (&q, &ch) in qubits.iter().zip(&chars) {
            if q >= n {
                return Err(GlabError::Label(format!("qubit {q} outside {n}")));
            }
            let (x, z) = match ch {
                'I' => (false, false),
                'X' => (true, false),
                'Y' => (true, true),
                'Z' => (false, true),
                _ => return Err(GlabError::Label(format!("unknown Pauli letter {ch}"))),
            };
            w.x.set(q, x);
            w.z.set(q, z);
        }
        Ok(w)
    }

    pub fn z_type(n: usize, qubits: &[usize]) -> Self {
        Self { x: BitVec::zeros(n), z: BitVec::from_indices(n, qubits), phase: 0 }
    }

    pub fn x_type(n: usize, qubits: &[usize]) -> Self {
        Self { x: BitVec::from_indices(n, qubits), z: BitVec::zeros(n), phase: 0 }
    }

    pub fn with_phase(mut self, phase: u8) -> Self {
        self.phase = phase % 4;
        self
    }

    pub fn letter(&self, q: usize) -> char {
        match (self.x.get(q), self.z.get(q)) {
            (false, false) => 'I',
            (true, false) => 'X',
            (true, true) => 'Y',
            (false, true) => 'Z',
        }
    }

    pub fn support(&self) -> Vec<usize> {
        (0..self.n()).filter(|&q| self.x.get(q) || self.z.get(q)).collect()
    }

    pub fn weight(&self) -> usize {
        self.support().len()
    }

    pub fn is_identity_up_to_phase(&self) -> bool {
        self.x.is_zero() && self.z.is_zero()
    }

    /// Symplectic vector `(x | z)`.
    pub fn symplectic(&self) -> BitVec {
        self.x.concat(&self.z)
    }

    pub fn from_symplectic(v: &BitVec) -> Self {
        let n = v.len / 2;
        Self { x: v.slice(0, n), z: v.slice(n, 2 * n), phase: 0 }
    }

    pub fn commutes_with(&self, other: &PauliWord) -> bool {
        !(self.x.dot(&other.z) ^ self.z.dot(&other.x))
    }

    /// Operator product `self · other` with exact phase.
    pub fn mul(&self, other: &PauliWord) -> PauliWord {
        let mut e = self.phase as i32 + other.phase as i32;
        for q in self.support() {
            e += g_exp(self.x.get(q), self.z.get(q), other.x.get(q), other.z.get(q));
        }
        let mut x = self.x.clone();
        x.xor_assign(&other.x);
        let mut z = self.z.clone();
        z.xor_assign(&other.z);
        PauliWord { x, z, phase: e.rem_euclid(4) as u8 }
    }

    pub fn is_hermitian(&self) -> bool {
        // P† = i^{-phase} P_bare, so Hermitian iff phase is real.
        self.phase.is_multiple_of(2)
    }

    /// Dense matrix on `labels` (first label most significant). Qubits of
    /// the word outside `labels` must be identity.
    pub fn to_dense(&self, labels: &[usize]) -> Result<Mat> {
        if self.support().iter().any(|q| !labels.contains(q)) {
            return Err(GlabError::Label(format!("word support {:?} outside {labels:?}", self.support())));
        }
        let letters: String = labels.iter().map(|&q| if q < self.n() { self.letter(q) } else { 'I' }).collect();
        Ok(linalg::pauli_string(&letters) * i_pow(self.phase))
    }

    /// Index masks of the X and Z parts on `labels`, and the number of `Y`s.
    fn masks(&self, labels: &[usize]) -> (usize, usize, u8) {
        let n = labels.len();
        let (mut xmask, mut zmask, mut ny) = (0usize, 0usize, 0u8);
        for (p, &q) in labels.iter().enumerate() {
            if q >= self.n() {
                continue;
            }
            let bit = 1usize << (n - 1 - p);
            let (x, z) = (self.x.get(q), self.z.get(q));
            if x {
                xmask |= bit;
            }
            if z {
                zmask |= bit;
            }
            if x && z {
                ny += 1;
            }
        }
        (xmask, zmask, ny)
    }

    /// `Tr(P† M) / d` for `M` on `labels`, in `O(d)`.
    pub fn coefficient(&self, m: &Mat, labels: &[usize]) -> C64 {
        let d = m.nrows();
        let (xmask, zmask, ny) = self.masks(labels);
        // P|b⟩ = i^{phase + #Y} (-1)^{z·b} |b ⊕ x⟩.
        let pre = i_pow(self.phase + ny).conj();
        let mut acc = ZERO;
        for b in 0..d {
            let v = m[(b ^ xmask, b)];
            if (b & zmask).count_ones() % 2 == 1 {
                acc -= v;
            } else {
                acc += v;
            }
        }
        acc * pre / d as f64
    }

    /// `m += coef · P` for `m` on `labels`, in `O(d)`.
    pub fn accumulate(&self, m: &mut Mat, labels: &[usize], coef: C64) {
        let d = m.nrows();
        let (xmask, zmask, ny) = self.masks(labels);
        let pre = i_pow(self.phase + ny) * coef;
        for b in 0..d {
            if (b & zmask).count_ones() % 2 == 1 {
                m[(b ^ xmask, b)] -= pre;
            } else {
                m[(b ^ xmask, b)] += pre;
            }
        }
    }

    pub fn to_sparse(&self) -> SparsePauli {
        SparsePauli { n: self.n(), ops: self.support().into_iter().map(|q| (q, self.letter(q))).collect(), phase: self.phase }
    }

    pub fn from_sparse(s: &SparsePauli) -> Result<Self> {
        let qubits: Vec<usize> = s.ops.iter().map(|p| p.0).collect();
        let letters: String = s.ops.iter().map(|p| p.1).collect();
        Ok(Self::from_letters(s.n, &qubits, &letters)?.with_phase(s.phase))
    }
}

/// Expansion `M = Σ c_P P` over all `4^n` words on `labels` (small `n`).
pub fn decompose(m: &Mat, labels: &[usize], n_total: usize, tol: f64) -> Vec<(PauliWord, C64)> {
    let k = labels.len();
    let mut out = vec![];
    for code in 0..(1usize << (2 * k)) {
        let mut w = PauliWord::identity(n_total);
        for (p, &q) in labels.iter().enumerate() {
            let two = (code >> (2 * p)) & 3;
            w.x.set(q, two & 1 == 1);
            w.z.set(q, two & 2 == 2);
        }
        let cf = w.coefficient(m, labels);
        if cf.norm() > tol {
            out.push((w, cf));
        }
    }
    out
}

/// If `m` is `± c · P` for a single Hermitian word, returns `(P, c)` with real `c`.
pub fn as_single_word(m: &Mat, labels: &[usize], n_total: usize) -> Option<(PauliWord, f64)> {
    let terms = decompose(m, labels, n_total, 1e-12);
    if terms.len() != 1 {
        return None;
    }
    let (w, cf) = &terms[0];
    if cf.im.abs() > 1e-12 {
        return None;
    }
    Some((w.clone(), cf.re))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn products_match_dense() {
        let letters = ['I', 'X', 'Y', 'Z'];
        for a in letters {
            for b in letters {
                let pa = PauliWord::from_letters(2, &[0, 1], &format!("{a}{b}")).unwrap();
                for cc in letters {
                    for dd in letters {
                        let pb = PauliWord::from_letters(2, &[0, 1], &format!("{cc}{dd}")).unwrap().with_phase(1);
                        let prod = pa.mul(&pb);
                        let dense = linalg::mul(&pa.to_dense(&[0, 1]).unwrap(), &pb.to_dense(&[0, 1]).unwrap());
                        assert!((prod.to_dense(&[0, 1]).unwrap() - &dense).norm() < 1e-12);
                        let comm = (linalg::mul(&pa.to_dense(&[0, 1]).unwrap(), &pb.to_dense(&[0, 1]).unwrap())
                            - linalg::mul(&pb.to_dense(&[0, 1]).unwrap(), &pa.to_dense(&[0, 1]).unwrap()))
                        .norm()
                            < 1e-12;
                        assert_eq!(comm, pa.commutes_with(&pb));
                    }
                }
            }
        }
    }

    #[test]
    fn coefficient_matches_trace() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = linalg::random_normal_matrix(&mut rng, 8, 8);
        let labels = [4, 1, 2];
        let w = PauliWord::from_letters(5, &[1, 2, 4], "YXZ").unwrap().with_phase(3);
        let p = w.to_dense(&labels).unwrap();
        let want = linalg::trace(&linalg::mul(&p.adjoint(), &m)) / 8.0;
        assert!((w.coefficient(&m, &labels) - want).norm() < 1e-12);
        let mut acc = Mat::zeros(8, 8);
        w.accumulate(&mut acc, &labels, C64::new(0.5, -1.0));
        assert!((acc - p.clone() * C64::new(0.5, -1.0)).norm() < 1e-12);
        let recon = decompose(&m, &labels, 5, 0.0)
            .iter()
            .fold(Mat::zeros(8, 8), |acc, (w, cf)| acc + w.to_dense(&labels).unwrap() * *cf);
        assert!((recon - m).norm() < 1e-10);
    }

    #[test]
    fn single_word_detection() {
        let zz = -linalg::pauli_string("ZZ");
        let (w, cf) = as_single_word(&zz, &[3, 4], 6).unwrap();
        assert_eq!(w.support(), vec![3, 4]);
        assert!((cf + 1.0).abs() < 1e-12);
        let heis = linalg::pauli_string("XX") + linalg::pauli_string("ZZ");
        assert!(as_single_word(&heis, &[0, 1], 2).is_none());
    }
}
