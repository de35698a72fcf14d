//! Fréchet distance between Gaussian fits of feature activations.
//!
//! `d^2 = |mu_a - mu_b|^2 + Tr(C_a + C_b - 2 (C_a C_b)^{1/2})`. The
//! cross term is evaluated as `Tr(sqrt(sqrt(C_a) C_b sqrt(C_a)))`, which has
//! the same trace (the two products are similar) and stays symmetric PSD.

use alloc::format;
use alloc::vec::Vec;

use super::linalg::{matrix_sqrt_psd, min_eigenvalue, psd_tolerance, trace_sqrt_psd, SymMatrix};
use crate::{Error, Result};

/// Jitter added to sample covariances before any square root.
pub const COVARIANCE_JITTER: f64 = 1e-6;

/// Mean vector and covariance matrix of a feature distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMoments {
    mean: Vec<f64>,
    cov: SymMatrix,
}

impl GaussianMoments {
    /// Validates symmetry and positive semi-definiteness (up to `1e-8`
    /// relative jitter).
    pub fn new(mean: Vec<f64>, cov: SymMatrix) -> Result<Self> {
        if mean.len() != cov.dim() {
            return Err(Error::arg(format!(
                "mean has {} entries but covariance is {}x{}",
                mean.len(),
                cov.dim(),
                cov.dim()
            )));
        }
        let tol = psd_tolerance(&cov);
        if cov.max_asymmetry() > tol {
            return Err(Error::arg("covariance is not symmetric"));
        }
        let min = min_eigenvalue(&cov);
        if min < -tol {
            return Err(Error::arg(format!("covariance has negative eigenvalue {min:e}")));
        }
        Ok(GaussianMoments { mean, cov })
    }

    /// Unbiased (`n - 1`) sample moments of `n` row-major `dims`-vectors,
    /// plus `jitter * I` on the covariance.
    pub fn from_samples(rows: &[f32], dims: usize, jitter: f64) -> Result<Self> {
        if dims == 0 || rows.len() % dims != 0 {
            return Err(Error::arg("feature rows do not divide evenly"));
        }
        let n = rows.len() / dims;
        if n < 2 {
            return Err(Error::arg("need at least two samples to estimate a covariance"));
        }
        let mut mean = alloc::vec![0.0f64; dims];
        for row in rows.chunks_exact(dims) {
            for (m, &v) in mean.iter_mut().zip(row) {
                *m += f64::from(v);
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);

        let mut cov = SymMatrix::zeros(dims);
        let mut centered = alloc::vec![0.0f64; dims];
        let mut upper = alloc::vec![0.0f64; dims * dims];
        for row in rows.chunks_exact(dims) {
            for ((c, &v), &m) in centered.iter_mut().zip(row).zip(&mean) {
                *c = f64::from(v) - m;
            }
            for i in 0..dims {
                let ci = centered[i];
                if ci == 0.0 {
                    continue;
                }
                let dst = &mut upper[i * dims + i..(i + 1) * dims];
                for (d, &cj) in dst.iter_mut().zip(&centered[i..]) {
                    *d += ci * cj;
                }
            }
        }
        let denom = (n - 1) as f64;
        for i in 0..dims {
            for j in i..dims {
                let v = upper[i * dims + j] / denom;
                cov.set(i, j, v);
                cov.set(j, i, v);
            }
        }
        cov.add_diagonal(jitter);
        Ok(GaussianMoments { mean, cov })
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn covariance(&self) -> &SymMatrix {
        &self.cov
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

pub fn frechet_distance(a: &GaussianMoments, b: &GaussianMoments) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::arg(format!(
            "moment dimensions differ ({} vs {})",
            a.dim(),
            b.dim()
        )));
    }
    let mean_term: f64 = a.mean.iter().zip(&b.mean).map(|(x, y)| (x - y) * (x - y)).sum();
    let sqrt_a = matrix_sqrt_psd(&a.cov)?;
    let product = sqrt_a.matmul(&b.cov).matmul(&sqrt_a).symmetrized();
    let cross = trace_sqrt_psd(&product)?;
    let d = mean_term + a.cov.trace() + b.cov.trace() - 2.0 * cross;
    let tol = 1e-8 * (1.0 + a.cov.max_abs() + b.cov.max_abs());
    if d < -tol {
        return Err(Error::Degenerate(format!("Fréchet distance evaluated to {d:e}")));
    }
    Ok(d.max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use rand::{Rng as _, SeedableRng};

    fn moments(mean: &[f64], diag: &[f64]) -> GaussianMoments {
        GaussianMoments::new(mean.to_vec(), SymMatrix::diagonal(diag)).unwrap()
    }

    /// Closed form for diagonal covariances, independent of any matrix
    /// square root: |dmu|^2 + sum_i (sqrt(c_i) - sqrt(c'_i))^2.
    fn diagonal_closed_form(ma: &[f64], ca: &[f64], mb: &[f64], cb: &[f64]) -> f64 {
        let mut d = 0.0;
        for i in 0..ma.len() {
            d += (ma[i] - mb[i]) * (ma[i] - mb[i]);
            let s = libm::sqrt(ca[i]) - libm::sqrt(cb[i]);
            d += s * s;
        }
        d
    }

    #[test]
    fn identical_moments_are_zero() {
        let a = moments(&[0.3, -1.0], &[2.0, 0.5]);
        assert!(frechet_distance(&a, &a).unwrap() < 1e-12);
    }

    #[test]
    fn scalar_case() {
        let a = moments(&[0.0], &[1.0]);
        let b = moments(&[1.0], &[4.0]);
        assert!((frechet_distance(&a, &b).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn two_dimensional_diagonal_case() {
        let a = moments(&[0.0, 0.0], &[1.0, 1.0]);
        let b = moments(&[3.0, 4.0], &[4.0, 9.0]);
        assert!((frechet_distance(&a, &b).unwrap() - 30.0).abs() < 1e-12);
    }

    #[test]
    fn matches_diagonal_closed_form() {
        let mut rng = crate::Rng::seed_from_u64(5);
        for _ in 0..50 {
            let d = rng.random_range(1..=5);
            let gen = |rng: &mut crate::Rng, lo: f64, hi: f64| -> Vec<f64> {
                (0..d).map(|_| rng.random_range(lo..hi)).collect()
            };
            let (ma, ca, mb, cb) = (gen(&mut rng, -2.0, 2.0), gen(&mut rng, 0.01, 5.0), gen(&mut rng, -2.0, 2.0), gen(&mut rng, 0.01, 5.0));
            let got = frechet_distance(&moments(&ma, &ca), &moments(&mb, &cb)).unwrap();
            assert!((got - diagonal_closed_form(&ma, &ca, &mb, &cb)).abs() < 1e-6);
        }
    }

    #[test]
    fn symmetric_for_full_covariances() {
        let mut rng = crate::Rng::seed_from_u64(8);
        for _ in 0..20 {
            let rows_a: Vec<f32> = (0..60 * 4).map(|_| rng.random::<f32>()).collect();
            let rows_b: Vec<f32> = (0..60 * 4).map(|_| rng.random::<f32>() * 1.5).collect();
            let a = GaussianMoments::from_samples(&rows_a, 4, COVARIANCE_JITTER).unwrap();
            let b = GaussianMoments::from_samples(&rows_b, 4, COVARIANCE_JITTER).unwrap();
            let ab = frechet_distance(&a, &b).unwrap();
            let ba = frechet_distance(&b, &a).unwrap();
            assert!((ab - ba).abs() < 1e-8, "{ab} vs {ba}");
            assert!(ab > 0.0);
        }
    }

    #[test]
    fn dimension_mismatch_rejected() {
        assert!(frechet_distance(&moments(&[0.0], &[1.0]), &moments(&[0.0, 0.0], &[1.0, 1.0])).is_err());
    }

    #[test]
    fn sample_covariance_is_unbiased() {
        // rows (0,0), (2,2): mean (1,1), deviations (+-1, +-1) -> cov entries 2/(2-1) = 2
        let m = GaussianMoments::from_samples(&[0.0, 0.0, 2.0, 2.0], 2, 0.0).unwrap();
        assert_eq!(m.mean(), &[1.0, 1.0]);
        assert_eq!(m.covariance().as_slice(), &[2.0, 2.0, 2.0, 2.0]);
        assert!(GaussianMoments::from_samples(&[0.0, 1.0], 2, 0.0).is_err());
    }

    #[test]
    fn invalid_moments_rejected() {
        assert!(GaussianMoments::new(vec![0.0, 0.0], SymMatrix::diagonal(&[1.0, -1.0])).is_err());
        assert!(GaussianMoments::new(vec![0.0], SymMatrix::diagonal(&[1.0, 1.0])).is_err());
    }
}
