//! Wishart sampling by the Bartlett decomposition.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};

use crate::error::{Error, Result};

use super::rng::stream_rng;

/// Cholesky factor of Σ₁ = diag(σ) R diag(σ).
pub fn covariance_factor(sigma1: &[f64], correlation: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let k = sigma1.len();
    if correlation.nrows() != k || correlation.ncols() != k {
        return Err(Error::Matrix(format!(
            "correlation is {}x{}, expected {k}x{k}",
            correlation.nrows(),
            correlation.ncols()
        )));
    }
    if sigma1.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
        return Err(Error::domain("sigma1 entries must be positive"));
    }
    let cov = DMatrix::from_fn(k, k, |i, j| sigma1[i] * sigma1[j] * correlation[(i, j)]);
    cov.cholesky()
        .map(|c| c.l())
        .ok_or_else(|| Error::Matrix("covariance is not positive definite".into()))
}

/// One draw of Σ̂₁ with ν₂Σ̂₁ ~ W_K(Σ₁, ν₂), given the Cholesky factor of Σ₁.
pub fn sample_wishart<R: Rng + ?Sized>(chol: &DMatrix<f64>, nu2: u32, rng: &mut R) -> DMatrix<f64> {
    let k = chol.nrows();
    let nu = nu2 as usize;
    let w = if nu >= k {
        // W = L A Aᵀ Lᵀ with A lower triangular, A_ii² ~ χ²(ν − i), A_ij ~ N(0,1).
        let mut a = DMatrix::<f64>::zeros(k, k);
        for i in 0..k {
            let chi = ChiSquared::new((nu - i) as f64).expect("positive df");
            a[(i, i)] = chi.sample(rng).sqrt();
            for j in 0..i {
                a[(i, j)] = StandardNormal.sample(rng);
            }
        }
        let la = chol * a;
        &la * la.transpose()
    } else {
        // Rank-deficient case: sum of ν outer products.
        let mut w = DMatrix::<f64>::zeros(k, k);
        for _ in 0..nu {
            let z = nalgebra::DVector::from_fn(k, |_, _| StandardNormal.sample(rng));
            let x = chol * z;
            w += &x * x.transpose();
        }
        w
    };
    w / nu2 as f64
}

/// `n` draws of the diagonal standard errors σ̂_{1,k} = √(Σ̂₁)_{kk}.
///
/// Draw `i` uses stream `i` under `seed`, so any prefix is reproducible.
pub fn sample_wishart_diag(
    sigma1: &[f64],
    correlation: &DMatrix<f64>,
    nu2: u32,
    n: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    if n == 0 {
        return Err(Error::invalid("n must be at least 1"));
    }
    if nu2 == 0 {
        return Err(Error::domain("nu2 must be at least 1"));
    }
    let chol = covariance_factor(sigma1, correlation)?;
    Ok((0..n)
        .map(|i| {
            let mut rng = stream_rng(seed, i as u64);
            let s = sample_wishart(&chol, nu2, &mut rng);
            (0..sigma1.len()).map(|k| s[(k, k)].sqrt()).collect()
        })
        .collect())
}
