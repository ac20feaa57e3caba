//! Dense linear algebra over GF(2) with bit-packed rows.

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BitVec {
    pub len: usize,
    words: Vec<u64>,
}

impl BitVec {
    pub fn zeros(len: usize) -> Self {
        Self { len, words: vec![0; len.div_ceil(64)] }
    }

    pub fn from_bools(bits: &[bool]) -> Self {
        let mut v = Self::zeros(bits.len());
        for (i, &b) in bits.iter().enumerate() {
            if b {
                v.set(i, true);
            }
        }
        v
    }

    pub fn from_indices(len: usize, idx: &[usize]) -> Self {
        let mut v = Self::zeros(len);
        for &i in idx {
            v.flip(i);
        }
        v
    }

    #[inline]
    pub fn get(&self, i: usize) -> bool {
        (self.words[i / 64] >> (i % 64)) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, i: usize, b: bool) {
        let m = 1u64 << (i % 64);
        if b {
            self.words[i / 64] |= m;
        } else {
            self.words[i / 64] &= !m;
        }
    }

    #[inline]
    pub fn flip(&mut self, i: usize) {
        self.words[i / 64] ^= 1u64 << (i % 64);
    }

    pub fn xor_assign(&mut self, other: &BitVec) {
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a ^= b;
        }
    }

    pub fn and(&self, other: &BitVec) -> BitVec {
        BitVec { len: self.len, words: self.words.iter().zip(&other.words).map(|(a, b)| a & b).collect() }
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_zero(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    /// Parity of the bitwise AND.
    pub fn dot(&self, other: &BitVec) -> bool {
        self.words.iter().zip(&other.words).map(|(a, b)| (a & b).count_ones()).sum::<u32>() % 2 == 1
    }

    pub fn ones(&self) -> Vec<usize> {
        (0..self.len).filter(|&i| self.get(i)).collect()
    }

    pub fn concat(&self, other: &BitVec) -> BitVec {
        let mut v = BitVec::zeros(self.len + other.len);
        for i in self.ones() {
            v.set(i, true);
        }
        for i in other.ones() {
            v.set(self.len + i, true);
        }
        v
    }

    pub fn slice(&self, start: usize, end: usize) -> BitVec {
        let mut v = BitVec::zeros(end - start);
        for i in start..end {
            if self.get(i) {
                v.set(i - start, true);
            }
        }
        v
    }
}

/// Row-reduced echelon form in place; returns pivot columns.
pub fn row_reduce(rows: &mut [BitVec]) -> Vec<usize> {
    let ncols = rows.first().map(|r| r.len).unwrap_or(0);
    let mut pivots = vec![];
    let mut r = 0;
    for col in 0..ncols {
        if r == rows.len() {
            break;
        }
        let Some(p) = (r..rows.len()).find(|&i| rows[i].get(col)) else { continue };
        rows.swap(r, p);
        let pivot = rows[r].clone();
        for (i, row) in rows.iter_mut().enumerate() {
            if i != r && row.get(col) {
                row.xor_assign(&pivot);
            }
        }
        pivots.push(col);
        r += 1;
    }
    pivots
}

pub fn rank(rows: &[BitVec]) -> usize {
    let mut m = rows.to_vec();
    row_reduce(&mut m).len()
}

/// Basis of the row space.
pub fn row_basis(rows: &[BitVec]) -> Vec<BitVec> {
    let mut m = rows.to_vec();
    let r = row_reduce(&mut m).len();
    m.truncate(r);
    m
}

/// Basis of `{a : Σ_i a_i rows_i = 0}` (left null space), vectors of length `rows.len()`.
pub fn left_kernel(rows: &[BitVec]) -> Vec<BitVec> {
    let k = rows.len();
    if k == 0 {
        return vec![];
    }
    let n = rows[0].len;
    // Augment each row with the identity and reduce on the original columns.
    let mut aug: Vec<BitVec> = rows
        .iter()
        .enumerate()
        .map(|(i, r)| r.concat(&BitVec::from_indices(k, &[i])))
        .collect();
    let mut r = 0;
    for col in 0..n {
        if r == k {
            break;
        }
        let Some(p) = (r..k).find(|&i| aug[i].get(col)) else { continue };
        aug.swap(r, p);
        let pivot = aug[r].clone();
        for (i, row) in aug.iter_mut().enumerate() {
            if i != r && row.get(col) {
                row.xor_assign(&pivot);
            }
        }
        r += 1;
    }
    aug[r..].iter().map(|row| row.slice(n, n + k)).collect()
}

/// Solve `Σ_i a_i rows_i = target`; `None` if `target` is outside the row space.
pub fn solve_combination(rows: &[BitVec], target: &BitVec) -> Option<BitVec> {
    let k = rows.len();
    let n = target.len;
    let mut aug: Vec<BitVec> = rows
        .iter()
        .enumerate()
        .map(|(i, r)| r.concat(&BitVec::from_indices(k, &[i])))
        .collect();
    let mut t = target.concat(&BitVec::zeros(k));
    let mut r = 0;
    for col in 0..n {
        let Some(p) = (r..k).find(|&i| aug[i].get(col)) else { continue };
        aug.swap(r, p);
        let pivot = aug[r].clone();
        for (i, row) in aug.iter_mut().enumerate() {
            if i != r && row.get(col) {
                row.xor_assign(&pivot);
            }
        }
        if t.get(col) {
            t.xor_assign(&pivot);
        }
        r += 1;
        if r == k {
            break;
        }
    }
    if t.slice(0, n).is_zero() {
        Some(t.slice(n, n + k))
    } else {
        None
    }
}

/// Subspace of `span(rows)` made of vectors vanishing on `mask` columns.
pub fn subspace_vanishing_on(rows: &[BitVec], mask: &BitVec) -> Vec<BitVec> {
    let restricted: Vec<BitVec> = rows.iter().map(|r| r.and(mask)).collect();
    let kernel = left_kernel(&restricted);
    let combos: Vec<BitVec> = kernel
        .iter()
        .map(|a| {
            let mut v = BitVec::zeros(rows[0].len);
            for i in a.ones() {
                v.xor_assign(&rows[i]);
            }
            v
        })
        .collect();
    row_basis(&combos)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rank_and_kernel() {
        let rows = vec![
            BitVec::from_bools(&[true, true, false]),
            BitVec::from_bools(&[false, true, true]),
            BitVec::from_bools(&[true, false, true]),
        ];
        assert_eq!(rank(&rows), 2);
        let ker = left_kernel(&rows);
        assert_eq!(ker.len(), 1);
        assert_eq!(ker[0].ones(), vec![0, 1, 2]);
        let t = BitVec::from_bools(&[true, false, true]);
        let a = solve_combination(&rows, &t).unwrap();
        let mut acc = BitVec::zeros(3);
        for i in a.ones() {
            acc.xor_assign(&rows[i]);
        }
        assert_eq!(acc, t);
        assert!(solve_combination(&rows, &BitVec::from_bools(&[true, false, false])).is_none());
    }

    #[test]
    fn vanishing_subspace() {
        let rows = vec![BitVec::from_bools(&[true, true, false, false]), BitVec::from_bools(&[false, true, true, false])];
        let mask = BitVec::from_bools(&[false, true, false, false]);
        let sub = subspace_vanishing_on(&rows, &mask);
        assert_eq!(sub.len(), 1);
        assert_eq!(sub[0].ones(), vec![0, 2]);
    }

    #[test]
    fn wide_rows_cross_word_boundary() {
        let a = BitVec::from_indices(130, &[0, 64, 129]);
        let b = BitVec::from_indices(130, &[64, 100]);
        assert!(a.dot(&b));
        let mut c = a.clone();
        c.xor_assign(&b);
        assert_eq!(c.ones(), vec![0, 100, 129]);
        assert_eq!(rank(&[a.clone(), b.clone(), c]), 2);
    }
}
