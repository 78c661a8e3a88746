//! Dense symmetric positive definite linear algebra for the kriging model.
//!
//! Matrices are small (a few hundred rows at most) and stored row-major in a
//! flat `Vec<f64>`.

use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, Result};

/// Diagonal jitter levels tried, in order, when a plain factorization fails.
pub const JITTER_LADDER: [f64; 5] = [1e-10, 1e-9, 1e-8, 1e-7, 1e-6];

/// Lower-triangular Cholesky factor `L` with `A = L Lᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct Cholesky {
    n: usize,
    l: Vec<f64>,
}

impl Cholesky {
    /// Factorizes the `n × n` row-major matrix `a`. Returns `None` when a pivot
    /// is not strictly positive.
    pub fn factor(a: &[f64], n: usize) -> Option<Self> {
        Self::factor_shifted(a, n, 0.0)
    }

    /// Factorizes `a + shift·I`.
    pub fn factor_shifted(a: &[f64], n: usize, shift: f64) -> Option<Self> {
        assert_eq!(a.len(), n * n, "matrix size mismatch");
        let mut l = vec![0.0; n * n];
        for j in 0..n {
            let mut diag = a[j * n + j] + shift;
            for k in 0..j {
                diag -= l[j * n + k] * l[j * n + k];
            }
            if !(diag > 0.0) || !diag.is_finite() {
                return None;
            }
            let ljj = libm::sqrt(diag);
            l[j * n + j] = ljj;
            for i in (j + 1)..n {
                let mut s = a[i * n + j];
                for k in 0..j {
                    s -= l[i * n + k] * l[j * n + k];
                }
                l[i * n + j] = s / ljj;
            }
        }
        Some(Cholesky { n, l })
    }

    /// Tries a plain factorization, then the [`JITTER_LADDER`]. Returns the
    /// factor together with the jitter that was needed (0 when none).
    pub fn factor_with_jitter(a: &[f64], n: usize) -> Result<(Self, f64)> {
        if let Some(c) = Self::factor(a, n) {
            return Ok((c, 0.0));
        }
        for &jitter in JITTER_LADDER.iter() {
            if let Some(c) = Self::factor_shifted(a, n, jitter) {
                log::debug!("cholesky needed diagonal jitter {jitter:e}");
                return Ok((c, jitter));
            }
        }
        Err(Error::Factorization {
            jitter: JITTER_LADDER[JITTER_LADDER.len() - 1],
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Solves `L z = b` in place.
    pub fn forward_in_place(&self, b: &mut [f64]) {
        let n = self.n;
        for i in 0..n {
            let mut s = b[i];
            let row = &self.l[i * n..i * n + i];
            for (k, lik) in row.iter().enumerate() {
                s -= lik * b[k];
            }
            b[i] = s / self.l[i * n + i];
        }
    }

    /// Solves `Lᵀ x = z` in place.
    pub fn backward_in_place(&self, b: &mut [f64]) {
        let n = self.n;
        for i in (0..n).rev() {
            let mut s = b[i];
            for k in (i + 1)..n {
                s -= self.l[k * n + i] * b[k];
            }
            b[i] = s / self.l[i * n + i];
        }
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.forward_in_place(&mut x);
        self.backward_in_place(&mut x);
        x
    }

    /// `bᵀ A⁻¹ b`, computed as `‖L⁻¹ b‖²`.
    pub fn quad_form_inv(&self, b: &[f64]) -> f64 {
        let mut z = b.to_vec();
        self.forward_in_place(&mut z);
        z.iter().map(|v| v * v).sum()
    }

    /// `ln det A = 2 Σ ln L_ii`.
    pub fn ln_det(&self) -> f64 {
        (0..self.n)
            .map(|i| libm::log(self.l[i * self.n + i]))
            .sum::<f64>()
            * 2.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_small_spd_system() {
        let a = [4.0, 2.0, 0.6, 2.0, 5.0, 1.0, 0.6, 1.0, 3.0];
        let c = Cholesky::factor(&a, 3).unwrap();
        let b = [1.0, -2.0, 0.5];
        let x = c.solve(&b);
        for i in 0..3 {
            let r: f64 = (0..3).map(|j| a[i * 3 + j] * x[j]).sum();
            assert!((r - b[i]).abs() < 1e-12);
        }
        let qf: f64 = b.iter().zip(&x).map(|(u, v)| u * v).sum();
        assert!((c.quad_form_inv(&b) - qf).abs() < 1e-12);
    }

    #[test]
    fn ln_det_matches_2x2() {
        let a = [2.0, 1.0, 1.0, 3.0];
        let c = Cholesky::factor(&a, 2).unwrap();
        assert!((c.ln_det() - libm::log(5.0)).abs() < 1e-14);
    }

    #[test]
    fn singular_needs_jitter() {
        let a = [1.0, 1.0, 1.0, 1.0];
        assert!(Cholesky::factor(&a, 2).is_none());
        let (_, jitter) = Cholesky::factor_with_jitter(&a, 2).unwrap();
        assert!(jitter > 0.0);
    }

    #[test]
    fn indefinite_fails_after_ladder() {
        let a = [1.0, 2.0, 2.0, 1.0];
        assert_eq!(
            Cholesky::factor_with_jitter(&a, 2).unwrap_err(),
            Error::Factorization { jitter: 1e-6 }
        );
    }
}
