//! Dense symmetric matrices, a cyclic Jacobi eigensolver and the PSD
//! square root built on it.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, Result};

/// Square `n x n` matrix stored row-major. Symmetry is a property checked
/// where it matters, not enforced by the type.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SymMatrix {
    pub fn from_row_major(n: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * n {
            return Err(Error::arg(format!("{} values cannot form a {n}x{n} matrix", data.len())));
        }
        Ok(SymMatrix { n, data })
    }

    pub fn zeros(n: usize) -> Self {
        SymMatrix { n, data: vec![0.0; n * n] }
    }

    pub fn identity(n: usize) -> Self {
        Self::diagonal(&vec![1.0; n])
    }

    pub fn diagonal(diag: &[f64]) -> Self {
        let n = diag.len();
        let mut m = Self::zeros(n);
        for (i, &d) in diag.iter().enumerate() {
            m.data[i * n + i] = d;
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self.get(i, i)).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max_asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.n {
            for j in i + 1..self.n {
                worst = worst.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        worst
    }

    /// `(A + A^T) / 2`
    pub fn symmetrized(&self) -> Self {
        let mut out = self.clone();
        for i in 0..self.n {
            for j in i + 1..self.n {
                let v = 0.5 * (self.get(i, j) + self.get(j, i));
                out.set(i, j, v);
                out.set(j, i, v);
            }
        }
        out
    }

    pub fn matmul(&self, rhs: &Self) -> Self {
        assert_eq!(self.n, rhs.n, "matmul dimension mismatch");
        let n = self.n;
        let mut out = Self::zeros(n);
        for i in 0..n {
            let row = &self.data[i * n..(i + 1) * n];
            let dst = &mut out.data[i * n..(i + 1) * n];
            for (k, &a) in row.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let src = &rhs.data[k * n..(k + 1) * n];
                for (d, &b) in dst.iter_mut().zip(src) {
                    *d += a * b;
                }
            }
        }
        out
    }

    pub fn sub(&self, rhs: &Self) -> Self {
        let data = self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect();
        SymMatrix { n: self.n, data }
    }

    pub fn add_diagonal(&mut self, v: f64) {
        for i in 0..self.n {
            self.data[i * self.n + i] += v;
        }
    }
}

/// Eigenvalues and (column) eigenvectors of a symmetric matrix.
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    pub values: Vec<f64>,
    /// Row-major; column `j` is the eigenvector of `values[j]`.
    pub vectors: Option<SymMatrix>,
}

const MAX_SWEEPS: usize = 100;

/// Cyclic Jacobi rotations on the (assumed symmetric) input. Only the upper
/// triangle is trusted; the input is symmetrized first.
pub fn symmetric_eigen(a: &SymMatrix, want_vectors: bool) -> SymmetricEigen {
    let n = a.n;
    let mut m = a.symmetrized();
    let mut v = want_vectors.then(|| SymMatrix::identity(n));
    let scale = m.max_abs().max(f64::MIN_POSITIVE);

    for _ in 0..MAX_SWEEPS {
        let mut off = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                off += m.get(i, j) * m.get(i, j);
            }
        }
        if libm::sqrt(off) <= 1e-15 * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m.get(p, q);
                if apq.abs() <= 1e-300 {
                    continue;
                }
                let theta = (m.get(q, q) - m.get(p, p)) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + libm::sqrt(theta * theta + 1.0));
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / libm::sqrt(t * t + 1.0);
                let s = t * c;
                rotate(&mut m, p, q, c, s);
                if let Some(v) = v.as_mut() {
                    for k in 0..n {
                        let (vkp, vkq) = (v.get(k, p), v.get(k, q));
                        v.set(k, p, c * vkp - s * vkq);
                        v.set(k, q, s * vkp + c * vkq);
                    }
                }
            }
        }
    }
    SymmetricEigen { values: (0..n).map(|i| m.get(i, i)).collect(), vectors: v }
}

// m <- J^T m J with J = [[c, s], [-s, c]] on the (p, q) plane.
fn rotate(m: &mut SymMatrix, p: usize, q: usize, c: f64, s: f64) {
    let n = m.n;
    for k in 0..n {
        let (akp, akq) = (m.get(k, p), m.get(k, q));
        m.set(k, p, c * akp - s * akq);
        m.set(k, q, s * akp + c * akq);
    }
    for k in 0..n {
        let (apk, aqk) = (m.get(p, k), m.get(q, k));
        m.set(p, k, c * apk - s * aqk);
        m.set(q, k, s * apk + c * aqk);
    }
    m.set(p, q, 0.0);
    m.set(q, p, 0.0);
}

/// Tolerance used for symmetry and negative-eigenvalue checks.
pub fn psd_tolerance(a: &SymMatrix) -> f64 {
    1e-8 * (1.0 + a.max_abs())
}

fn check_symmetric(a: &SymMatrix) -> Result<()> {
    let asym = a.max_asymmetry();
    if asym > psd_tolerance(a) {
        return Err(Error::arg(format!("matrix is not symmetric (max |a_ij - a_ji| = {asym:e})")));
    }
    Ok(())
}

fn clamped_eigenvalues(a: &SymMatrix, eig: &SymmetricEigen) -> Result<Vec<f64>> {
    let tol = psd_tolerance(a);
    eig.values
        .iter()
        .map(|&l| {
            if l < -tol {
                Err(Error::arg(format!("matrix is not positive semidefinite (eigenvalue {l:e})")))
            } else {
                Ok(l.max(0.0))
            }
        })
        .collect()
}

/// Symmetric PSD square root `S` with `S S = A`. Eigenvalues in
/// `[-tol, 0)` are treated as zero.
pub fn matrix_sqrt_psd(a: &SymMatrix) -> Result<SymMatrix> {
    check_symmetric(a)?;
    let eig = symmetric_eigen(a, true);
    let roots: Vec<f64> = clamped_eigenvalues(a, &eig)?.into_iter().map(libm::sqrt).collect();
    let v = eig.vectors.expect("eigenvectors requested");
    let n = a.n;
    let mut s = SymMatrix::zeros(n);
    for i in 0..n {
        for j in i..n {
            let mut acc = 0.0;
            for (k, r) in roots.iter().enumerate() {
                acc += v.get(i, k) * r * v.get(j, k);
            }
            s.set(i, j, acc);
            s.set(j, i, acc);
        }
    }
    Ok(s)
}

/// `Tr(sqrt(A))` for symmetric PSD `A`; negative eigenvalues within
/// tolerance count as zero.
pub fn trace_sqrt_psd(a: &SymMatrix) -> Result<f64> {
    check_symmetric(a)?;
    let eig = symmetric_eigen(a, false);
    Ok(clamped_eigenvalues(a, &eig)?.into_iter().map(libm::sqrt).sum())
}

/// Smallest eigenvalue, for PSD validation.
pub fn min_eigenvalue(a: &SymMatrix) -> f64 {
    symmetric_eigen(a, false).values.into_iter().fold(f64::INFINITY, f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng as _, SeedableRng};

    fn random_spd(n: usize, rng: &mut crate::Rng) -> SymMatrix {
        let b = SymMatrix::from_row_major(n, (0..n * n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let mut bt = SymMatrix::zeros(n);
        for i in 0..n {
            for j in 0..n {
                bt.set(i, j, b.get(j, i));
            }
        }
        let mut a = b.matmul(&bt);
        a.add_diagonal(1e-3);
        a.symmetrized()
    }

    #[test]
    fn identity_root_is_identity() {
        let s = matrix_sqrt_psd(&SymMatrix::identity(4)).unwrap();
        assert!(s.sub(&SymMatrix::identity(4)).max_abs() < 1e-15);
    }

    #[test]
    fn diagonal_root() {
        let s = matrix_sqrt_psd(&SymMatrix::diagonal(&[4.0, 9.0])).unwrap();
        assert!(s.sub(&SymMatrix::diagonal(&[2.0, 3.0])).max_abs() < 1e-15);
    }

    #[test]
    fn random_spd_reconstruction() {
        let mut rng = crate::Rng::seed_from_u64(17);
        for case in 0..50 {
            let n = 1 + case % 8;
            let a = random_spd(n, &mut rng);
            let s = matrix_sqrt_psd(&a).unwrap();
            let err = s.matmul(&s).sub(&a).max_abs();
            assert!(err <= 1e-8 * (1.0 + a.max_abs()), "case {case}: err {err:e}");
            assert!(s.max_asymmetry() < 1e-12);
            assert!(min_eigenvalue(&s) >= -1e-10);
        }
    }

    #[test]
    fn asymmetric_input_rejected() {
        let a = SymMatrix::from_row_major(2, alloc::vec![1.0, 0.5, 0.0, 1.0]).unwrap();
        assert!(matrix_sqrt_psd(&a).is_err());
    }

    #[test]
    fn negative_definite_rejected_but_jitter_clamped() {
        assert!(matrix_sqrt_psd(&SymMatrix::diagonal(&[1.0, -0.5])).is_err());
        let s = matrix_sqrt_psd(&SymMatrix::diagonal(&[1.0, -1e-12])).unwrap();
        assert_eq!(s.get(1, 1), 0.0);
    }

    #[test]
    fn eigen_decomposition_reconstructs() {
        let mut rng = crate::Rng::seed_from_u64(3);
        let a = random_spd(6, &mut rng);
        let eig = symmetric_eigen(&a, true);
        let v = eig.vectors.unwrap();
        for i in 0..6 {
            for j in 0..6 {
                let r: f64 = (0..6).map(|k| v.get(i, k) * eig.values[k] * v.get(j, k)).sum();
                assert!((r - a.get(i, j)).abs() < 1e-12);
            }
        }
    }
}
