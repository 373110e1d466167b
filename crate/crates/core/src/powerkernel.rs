//! Rejection probabilities of the (t, c) family of equivalence tests.
//!
//! A member rejects H₀ in dimension k iff |θ̂_k| < c_k − t_k σ̂_{1,k}. With
//! t = 0 the region no longer depends on σ̂₁ and the probability is a plain
//! normal (or multivariate-normal) box probability.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::statdist::mvn::MvnEngine;
use crate::statdist::rng::stream_rng;
use crate::statdist::wishart::{covariance_factor, sample_wishart};
use crate::statdist::{norm_interval, norm_pdf, sigma_hat_expect, SigmaHatLaw};

/// Below this σ₁ the estimate is treated as exact.
pub const DEGENERATE_SIGMA: f64 = 1e-12;
/// Default number of Wishart draws for t ≠ 0 multivariate evaluations.
pub const DEFAULT_WISHART_DRAWS: usize = 10_000;

/// Arguments of the univariate rejection probability ω(θ, σ₁, ν₂, t, c).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnivPowerQuery {
    pub theta: f64,
    pub sigma1: f64,
    pub nu2: u32,
    pub t: f64,
    pub c: f64,
}

impl UnivPowerQuery {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma1 > 0.0) {
            return Err(Error::domain(format!("sigma1 must be positive, got {}", self.sigma1)));
        }
        if !(self.c > 0.0) {
            return Err(Error::domain(format!("margin c must be positive, got {}", self.c)));
        }
        if !(self.t >= 0.0) {
            return Err(Error::domain(format!("critical value t must be nonnegative, got {}", self.t)));
        }
        if self.nu2 == 0 {
            return Err(Error::domain("nu2 must be at least 1"));
        }
        if !self.theta.is_finite() {
            return Err(Error::domain("theta must be finite"));
        }
        Ok(())
    }
}

/// ω(θ, σ₁, ν₂, t, c) after validating the query.
pub fn power_uni(q: &UnivPowerQuery) -> Result<f64> {
    q.validate()?;
    Ok(omega(q.theta, q.sigma1, q.nu2, q.t, q.c))
}

/// ω at θ = c₀: the size of the (t, c) member, whose supremum over the
/// univariate null is attained at ±c₀.
pub fn size_uni(sigma1: f64, nu2: u32, t: f64, c: f64, c0: f64) -> Result<f64> {
    power_uni(&UnivPowerQuery { theta: c0, sigma1, nu2, t, c })
}

/// Unchecked ω; callers guarantee the query invariants.
pub fn omega(theta: f64, sigma1: f64, nu2: u32, t: f64, c: f64) -> f64 {
    if sigma1 <= DEGENERATE_SIGMA {
        return if theta.abs() < c { 1.0 } else { 0.0 };
    }
    if t == 0.0 {
        return omega_t0(theta, sigma1, c);
    }
    let law = SigmaHatLaw { sigma1, nu2 };
    let v = sigma_hat_expect(&law, c / t, |x| {
        let m = c - t * x;
        norm_interval((-m - theta) / sigma1, (m - theta) / sigma1)
    });
    v.clamp(0.0, 1.0)
}

/// Closed form Φ((c−θ)/σ₁) − Φ((−c−θ)/σ₁).
#[inline]
pub fn omega_t0(theta: f64, sigma1: f64, c: f64) -> f64 {
    norm_interval((-c - theta) / sigma1, (c - theta) / sigma1)
}

/// ∂ω/∂c at t = 0: [φ((c−θ)/σ₁) + φ((c+θ)/σ₁)]/σ₁.
#[inline]
pub fn omega_t0_dc(theta: f64, sigma1: f64, c: f64) -> f64 {
    (norm_pdf((c - theta) / sigma1) + norm_pdf((c + theta) / sigma1)) / sigma1
}

/// Arguments of the multivariate rejection probability ω_K.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MvtPowerQuery {
    pub theta: Vec<f64>,
    pub sigma1: Vec<f64>,
    pub correlation: DMatrix<f64>,
    pub nu2: u32,
    pub t: Vec<f64>,
    pub c: Vec<f64>,
}

impl MvtPowerQuery {
    pub fn dim(&self) -> usize {
        self.theta.len()
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.dim();
        if k == 0 || self.sigma1.len() != k || self.t.len() != k || self.c.len() != k {
            return Err(Error::invalid("theta, sigma1, t and c must share a nonzero length"));
        }
        if self.correlation.nrows() != k || self.correlation.ncols() != k {
            return Err(Error::Matrix(format!("correlation must be {k}x{k}")));
        }
        if self.nu2 == 0 {
            return Err(Error::domain("nu2 must be at least 1"));
        }
        for i in 0..k {
            if !(self.sigma1[i] > 0.0) || !(self.c[i] > 0.0) || !(self.t[i] >= 0.0) || !self.theta[i].is_finite() {
                return Err(Error::domain(format!("invalid coordinate {i}: need sigma1 > 0, c > 0, t >= 0")));
            }
        }
        Ok(())
    }
}

/// ω_K(θ, Σ₁, ν₂, t, c).
///
/// The t = 0 branch is one rectangle probability. Otherwise the
/// probability is averaged over `draws` Wishart draws of Σ̂₁, except under
/// identity correlation where coordinates are independent and ω_K is the
/// product of univariate terms.
pub fn power_mvt(q: &MvtPowerQuery, tol: f64, seed: u64, draws: usize) -> Result<f64> {
    q.validate()?;
    let engine = MvnEngine::new(&q.correlation, seed)?;
    if q.t.iter().all(|&t| t == 0.0) {
        return Ok(rect_t0(&engine, &q.theta, &q.sigma1, &q.c, tol));
    }
    if is_identity(&q.correlation) {
        return Ok((0..q.dim()).map(|k| omega(q.theta[k], q.sigma1[k], q.nu2, q.t[k], q.c[k])).product());
    }
    let eval = WishartEvaluator::new(&q.sigma1, &q.correlation, q.nu2, draws, seed)?;
    Ok(eval.power(&q.theta, &q.t, &q.c, tol))
}

/// Box probability of |θ̂_k| < c_k under θ̂ ~ N(θ, Σ₁) (the t = 0 member).
pub fn rect_t0(engine: &MvnEngine, theta: &[f64], sigma1: &[f64], c: &[f64], tol: f64) -> f64 {
    let k = theta.len();
    let mut a = Vec::with_capacity(k);
    let mut b = Vec::with_capacity(k);
    for i in 0..k {
        a.push((-c[i] - theta[i]) / sigma1[i]);
        b.push((c[i] - theta[i]) / sigma1[i]);
    }
    engine.prob(&a, &b, tol).value
}

pub(crate) fn is_identity(r: &DMatrix<f64>) -> bool {
    let k = r.nrows();
    (0..k).all(|i| (0..k).all(|j| i == j || r[(i, j)] == 0.0))
}

/// Common-random-number evaluator of ω_K for t ≠ 0.
///
/// Holds a fixed set of Wishart draws (stored as ratios σ̂_{1,k}/σ_{1,k})
/// so that repeated evaluations at different (θ, t, c) vary smoothly.
#[derive(Debug, Clone)]
pub struct WishartEvaluator {
    sigma1: Vec<f64>,
    ratios: Vec<Vec<f64>>,
    engine: MvnEngine,
    independent: bool,
    nu2: u32,
}

impl WishartEvaluator {
    pub fn new(sigma1: &[f64], correlation: &DMatrix<f64>, nu2: u32, draws: usize, seed: u64) -> Result<Self> {
        if draws == 0 {
            return Err(Error::invalid("draws must be positive"));
        }
        let chol = covariance_factor(sigma1, correlation)?;
        let engine = MvnEngine::new(correlation, seed)?;
        let k = sigma1.len();
        let ratios = (0..draws)
            .into_par_iter()
            .map(|i| {
                let mut rng = stream_rng(seed, i as u64);
                let s = sample_wishart(&chol, nu2, &mut rng);
                (0..k).map(|j| s[(j, j)].sqrt() / sigma1[j]).collect()
            })
            .collect();
        Ok(Self { sigma1: sigma1.to_vec(), ratios, engine, independent: is_identity(correlation), nu2 })
    }

    pub fn draws(&self) -> usize {
        self.ratios.len()
    }

    /// Per-draw conditional rejection probabilities.
    pub fn conditional(&self, theta: &[f64], t: &[f64], c: &[f64], tol: f64) -> Vec<f64> {
        let k = self.sigma1.len();
        self.ratios
            .par_iter()
            .map(|r| {
                let mut a = vec![0.0; k];
                let mut b = vec![0.0; k];
                for i in 0..k {
                    let m = c[i] - t[i] * r[i] * self.sigma1[i];
                    if m <= 0.0 {
                        return 0.0;
                    }
                    a[i] = (-m - theta[i]) / self.sigma1[i];
                    b[i] = (m - theta[i]) / self.sigma1[i];
                }
                self.engine.prob(&a, &b, tol).value
            })
            .collect()
    }

    /// Monte Carlo estimate of ω_K(θ, Σ₁, ν₂, t, c).
    pub fn power(&self, theta: &[f64], t: &[f64], c: &[f64], tol: f64) -> f64 {
        if self.independent {
            // Coordinates are independent; integrate each exactly.
            return (0..theta.len()).map(|k| omega(theta[k], self.sigma1[k], self.nu2, t[k], c[k])).product();
        }
        let v = self.conditional(theta, t, c, tol);
        v.iter().sum::<f64>() / v.len() as f64
    }

    /// Monte Carlo estimate and its standard error (zero on the exact path).
    pub fn power_with_stderr(&self, theta: &[f64], t: &[f64], c: &[f64], tol: f64) -> (f64, f64) {
        if self.independent {
            return (self.power(theta, t, c, tol), 0.0);
        }
        let v = self.conditional(theta, t, c, tol);
        let n = v.len() as f64;
        let m = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0).max(1.0);
        (m, (var / n).sqrt())
    }
}
