//! Dense complex linear algebra helpers.
//!
//! Hermitian eigendecompositions take a real fast path when the input has no
//! imaginary part, and a trivial path for diagonal input. Large complex
//! products go through three real GEMMs.

use nalgebra::{DMatrix, DMatrixView, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{GlabError, Result};

pub type C64 = Complex64;
pub type Mat = DMatrix<C64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

/// Default pseudo-inverse threshold, relative to the largest eigenvalue.
pub const PINV_REL: f64 = 1e-12;

const SMALL_MUL: usize = 4096;

pub fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

fn is_real(a: &Mat) -> bool {
    a.iter().all(|z| z.im == 0.0)
}

/// Complex matrix product on real GEMMs. The left factor is read in place as
/// a `2m × k` real matrix whose rows alternate real and imaginary parts.
pub fn mul(a: &Mat, b: &Mat) -> Mat {
    assert_eq!(a.ncols(), b.nrows(), "inner dimensions differ");
    let (m, k, n) = (a.nrows(), a.ncols(), b.ncols());
    if m * k * n < SMALL_MUL {
        return a * b;
    }
    // SAFETY: `Complex<f64>` is `repr(C)` with fields `re, im`, and the
    // matrix storage is one contiguous column-major buffer.
    let flat: &[f64] = unsafe { std::slice::from_raw_parts(a.as_ptr() as *const f64, 2 * m * k) };
    let av = DMatrixView::<f64>::from_slice(flat, 2 * m, k);
    let r1 = av * b.map(|z| z.re);
    if is_real(b) {
        return Mat::from_fn(m, n, |i, j| C64::new(r1[(2 * i, j)], r1[(2 * i + 1, j)]));
    }
    let r2 = av * b.map(|z| z.im);
    Mat::from_fn(m, n, |i, j| {
        C64::new(r1[(2 * i, j)] - r2[(2 * i + 1, j)], r1[(2 * i + 1, j)] + r2[(2 * i, j)])
    })
}

/// `a * b * a^dagger`.
pub fn sandwich(a: &Mat, b: &Mat) -> Mat {
    mul(&mul(a, b), &a.adjoint())
}

pub fn dagger(a: &Mat) -> Mat {
    a.adjoint()
}

pub fn trace(a: &Mat) -> C64 {
    a.diagonal().iter().sum()
}

pub fn hermitize(a: &Mat) -> Mat {
    (a + a.adjoint()).scale(0.5)
}

/// Largest entry of `|a - a^dagger|`.
pub fn hermiticity_defect(a: &Mat) -> f64 {
    let n = a.nrows();
    let mut worst = 0.0f64;
    for j in 0..n {
        for i in 0..=j {
            worst = worst.max((a[(i, j)] - a[(j, i)].conj()).norm());
        }
    }
    worst
}

pub fn identity(d: usize) -> Mat {
    Mat::identity(d, d)
}

pub fn kron(a: &Mat, b: &Mat) -> Mat {
    a.kronecker(b)
}

pub fn kron_all(ops: &[Mat]) -> Mat {
    ops.iter()
        .fold(Mat::from_element(1, 1, ONE), |acc, m| acc.kronecker(m))
}

pub fn pauli(ch: char) -> Mat {
    match ch {
        'I' => identity(2),
        'X' => Mat::from_row_slice(2, 2, &[ZERO, ONE, ONE, ZERO]),
        'Y' => Mat::from_row_slice(2, 2, &[ZERO, -I, I, ZERO]),
        'Z' => Mat::from_row_slice(2, 2, &[ONE, ZERO, ZERO, -ONE]),
        _ => panic!("unknown Pauli symbol {ch}"),
    }
}

/// Tensor product of single-qubit Paulis, e.g. `pauli_string("XZ")`.
pub fn pauli_string(s: &str) -> Mat {
    let ops: Vec<Mat> = s.chars().map(pauli).collect();
    kron_all(&ops)
}

pub fn is_diagonal(a: &Mat) -> bool {
    let n = a.nrows();
    for j in 0..n {
        for i in 0..n {
            if i != j && a[(i, j)] != ZERO {
                return false;
            }
        }
    }
    true
}

/// Eigendecomposition of a Hermitian matrix, eigenvalues ascending.
pub fn eigh(a: &Mat) -> (Vec<f64>, Mat) {
    let n = a.nrows();
    if is_diagonal(a) {
        let mut idx: Vec<usize> = (0..n).collect();
        idx.sort_by(|&i, &j| a[(i, i)].re.total_cmp(&a[(j, j)].re));
        let vals = idx.iter().map(|&i| a[(i, i)].re).collect();
        let mut vecs = Mat::zeros(n, n);
        for (col, &i) in idx.iter().enumerate() {
            vecs[(i, col)] = ONE;
        }
        return (vals, vecs);
    }
    let h = hermitize(a);
    let (mut vals, mut vecs) = symmetric_eigen(&h);
    if vals.iter().any(|v| !v.is_finite()) || vecs.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        // The QR sweep can break down on matrices with many exactly zero
        // rows; a fixed random rotation removes the structure.
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
        let u = random_unitary(&mut rng, n);
        let rotated = hermitize(&mul(&mul(&u, &h), &u.adjoint()));
        let (v2, w2) = symmetric_eigen(&rotated);
        vals = v2;
        vecs = mul(&u.adjoint(), &w2);
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| vals[i].total_cmp(&vals[j]));
    let sorted = idx.iter().map(|&i| vals[i]).collect();
    let vecs = Mat::from_fn(n, n, |r, col| vecs[(r, idx[col])]);
    (sorted, vecs)
}

fn symmetric_eigen(h: &Mat) -> (DVector<f64>, Mat) {
    if is_real(h) {
        let e = h.map(|z| z.re).symmetric_eigen();
        (e.eigenvalues, e.eigenvectors.map(c))
    } else {
        let e = h.clone().symmetric_eigen();
        (e.eigenvalues, e.eigenvectors)
    }
}

/// Cholesky attempt on a Hermitian matrix; false at the first non-positive pivot.
pub fn is_positive_definite(a: &Mat) -> bool {
    let n = a.nrows();
    let mut l = Mat::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)].re;
        for k in 0..j {
            d -= l[(j, k)].norm_sqr();
        }
        if d.is_nan() || d <= 0.0 {
            return false;
        }
        let d = d.sqrt();
        l[(j, j)] = c(d);
        for i in j + 1..n {
            let mut v = a[(i, j)];
            for k in 0..j {
                v -= l[(i, k)] * l[(j, k)].conj();
            }
            l[(i, j)] = v / d;
        }
    }
    true
}

pub fn eigvalsh(a: &Mat) -> Vec<f64> {
    eigh(a).0
}

/// Rebuild `V diag(f(lambda)) V^dagger`.
pub fn spectral_apply(vals: &[f64], vecs: &Mat, f: impl Fn(f64) -> C64) -> Mat {
    let n = vals.len();
    let mut scaled = vecs.clone();
    for (j, &v) in vals.iter().enumerate() {
        let fv = f(v);
        for i in 0..n {
            scaled[(i, j)] *= fv;
        }
    }
    mul(&scaled, &vecs.adjoint())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MatFn {
    Exp,
    Log,
    Power(f64),
}

/// Matrix function through the eigendecomposition. Eigenvalues below
/// `threshold * lambda_max` map to zero for `Log` and negative powers.
pub fn matrix_function(a: &Mat, f: MatFn, threshold: f64) -> Result<Mat> {
    let defect = hermiticity_defect(a);
    if matches!(f, MatFn::Log | MatFn::Power(_)) && defect > 1e-10 {
        return Err(GlabError::Domain(format!(
            "matrix function needs Hermitian input (defect {defect:.2e})"
        )));
    }
    if f == MatFn::Exp && defect > 1e-10 {
        return Ok(expm(a));
    }
    let (vals, vecs) = eigh(a);
    let lmax = vals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let cut = threshold * lmax;
    Ok(spectral_apply(&vals, &vecs, |x| match f {
        MatFn::Exp => c(x.exp()),
        MatFn::Log => {
            if x > cut {
                c(x.ln())
            } else {
                ZERO
            }
        }
        MatFn::Power(p) => {
            if x > cut || (p >= 0.0 && x > 0.0) {
                c(x.powf(p))
            } else {
                ZERO
            }
        }
    }))
}

/// General matrix exponential (scaling and squaring with Taylor core).
pub fn expm(a: &Mat) -> Mat {
    let norm1 = (0..a.ncols())
        .map(|j| a.column(j).iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max);
    let mut s = 0u32;
    let mut scale = 1.0;
    while norm1 * scale > 0.5 {
        s += 1;
        scale *= 0.5;
    }
    let x = a.scale(scale);
    let n = a.nrows();
    let mut term = identity(n);
    let mut sum = identity(n);
    for k in 1..=18 {
        term = mul(&term, &x).unscale(k as f64);
        sum += &term;
        if term.norm() < 1e-18 * sum.norm() {
            break;
        }
    }
    for _ in 0..s {
        sum = mul(&sum, &sum);
    }
    sum
}

/// Sum of singular values.
pub fn trace_norm(a: &Mat) -> f64 {
    if hermiticity_defect(a) < 1e-12 {
        eigvalsh(a).iter().map(|v| v.abs()).sum()
    } else {
        a.clone().singular_values().iter().sum()
    }
}

/// Largest singular value.
pub fn op_norm(a: &Mat) -> f64 {
    if a.nrows() == 0 {
        return 0.0;
    }
    if hermiticity_defect(a) < 1e-12 {
        eigvalsh(a).iter().fold(0.0f64, |m, v| m.max(v.abs()))
    } else {
        a.clone().singular_values().iter().fold(0.0f64, |m, v| m.max(*v))
    }
}

/// Hermitian operator with the sign of each eigenvalue, the optimal
/// witness in `||X||_1 = sup_{||O|| <= 1} Tr(X O)`.
pub fn sign_operator(a: &Mat) -> Mat {
    let (vals, vecs) = eigh(a);
    spectral_apply(&vals, &vecs, |x| if x >= 0.0 { ONE } else { -ONE })
}

/// Von Neumann entropy in bits.
pub fn entropy_bits(rho: &Mat) -> f64 {
    eigvalsh(rho)
        .iter()
        .filter(|&&p| p > 1e-300)
        .map(|&p| -p * p.log2())
        .sum()
}

/// `||sqrt(rho) sqrt(sigma)||_1`.
pub fn fidelity_raw(rho: &Mat, sigma: &Mat) -> f64 {
    let sr = matrix_function(rho, MatFn::Power(0.5), 0.0).expect("Hermitian");
    let ss = matrix_function(sigma, MatFn::Power(0.5), 0.0).expect("Hermitian");
    let prod = mul(&sr, &ss);
    prod.singular_values().iter().sum::<f64>().min(1.0)
}

pub fn random_normal_matrix<R: Rng + ?Sized>(rng: &mut R, n: usize, m: usize) -> Mat {
    Mat::from_fn(n, m, |_, _| {
        C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
    })
}

/// Haar unitary from the QR of a Ginibre matrix with phase fix.
pub fn random_unitary<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Mat {
    let g = random_normal_matrix(rng, n, n);
    let qr = g.qr();
    let q = qr.q();
    let r = qr.r();
    let mut u = q.clone();
    for j in 0..n {
        let d = r[(j, j)];
        let ph = if d.norm() > 0.0 { d / d.norm() } else { ONE };
        for i in 0..n {
            u[(i, j)] *= ph;
        }
    }
    u
}

/// Random full-rank density matrix from the Ginibre ensemble.
pub fn random_density<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Mat {
    let g = random_normal_matrix(rng, n, n);
    let rho = mul(&g, &g.adjoint());
    let t = trace(&rho).re;
    hermitize(&rho.unscale(t))
}

pub fn random_pure<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Mat {
    let v = random_normal_matrix(rng, n, 1);
    let v = v.unscale(v.norm());
    &v * v.adjoint()
}

/// Random Hermitian matrix with unit operator norm.
pub fn random_hermitian<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Mat {
    let g = random_normal_matrix(rng, n, n);
    let h = hermitize(&g);
    let nrm = op_norm(&h);
    h.unscale(nrm)
}

/// Column-stacking vectorisation: `vec(X)[i + d*j] = X[i, j]`.
pub fn vec_col(a: &Mat) -> DVector<C64> {
    DVector::from_column_slice(a.as_slice())
}

pub fn unvec_col(v: &[C64], d: usize) -> Mat {
    Mat::from_column_slice(d, d, v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn fast_mul_matches_naive() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random_normal_matrix(&mut rng, 40, 33);
        let b = random_normal_matrix(&mut rng, 33, 50);
        assert!((mul(&a, &b) - &a * &b).norm() < 1e-10);
    }

    #[test]
    fn eigh_reconstructs() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let h = random_hermitian(&mut rng, 16);
        let (v, u) = eigh(&h);
        let back = spectral_apply(&v, &u, c);
        assert!((back - h).norm() < 1e-10);
        assert!(v.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn exp_of_log_two_diag() {
        let a = Mat::from_diagonal(&DVector::from_vec(vec![c(0.0), c(2f64.ln())]));
        let e = matrix_function(&a, MatFn::Exp, PINV_REL).unwrap();
        assert!((e[(0, 0)].re - 1.0).abs() < 1e-14);
        assert!((e[(1, 1)].re - 2.0).abs() < 1e-14);
    }

    #[test]
    fn negative_power_uses_pseudo_inverse() {
        let a = Mat::from_diagonal(&DVector::from_vec(vec![c(4.0), c(0.0)]));
        let p = matrix_function(&a, MatFn::Power(-0.5), PINV_REL).unwrap();
        assert!((p[(0, 0)].re - 0.5).abs() < 1e-14);
        assert_eq!(p[(1, 1)], ZERO);
    }

    #[test]
    fn sqrt_squares_back() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rho = random_density(&mut rng, 4);
        let s = matrix_function(&rho, MatFn::Power(0.5), PINV_REL).unwrap();
        assert!((mul(&s, &s) - rho).norm() < 1e-10);
    }

    #[test]
    fn log_rejects_non_hermitian() {
        let a = Mat::from_row_slice(2, 2, &[ONE, ONE, ZERO, ONE]);
        assert!(matrix_function(&a, MatFn::Log, PINV_REL).is_err());
    }

    #[test]
    fn expm_general_matches_series() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = random_normal_matrix(&mut rng, 6, 6).scale(0.7);
        let e = expm(&a);
        let e_inv = expm(&(-a));
        assert!((mul(&e, &e_inv) - identity(6)).norm() < 1e-10);
    }

    #[test]
    fn trace_norm_known_values() {
        let d = Mat::from_diagonal(&DVector::from_vec(vec![c(0.5), c(-0.5)]));
        assert!((trace_norm(&d) - 1.0).abs() < 1e-14);
        let zero = pauli_string("Z");
        let ket0 = (identity(2) + &zero).scale(0.5);
        let plus = (identity(2) + pauli('X')).scale(0.5);
        assert!((trace_norm(&(ket0 - plus)) - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn fidelity_of_pure_states() {
        let ket0 = (identity(2) + pauli('Z')).scale(0.5);
        let ket1 = (identity(2) - pauli('Z')).scale(0.5);
        let plus = (identity(2) + pauli('X')).scale(0.5);
        assert!(fidelity_raw(&ket0, &ket1).abs() < 1e-7);
        assert!((fidelity_raw(&ket0, &plus) - 0.5f64.sqrt()).abs() < 1e-7);
        assert!((fidelity_raw(&plus, &plus) - 1.0).abs() < 1e-7);
    }
}
