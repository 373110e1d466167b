//! Multivariate normal rectangle probabilities.
//!
//! Structured correlations are dispatched to deterministic exact rules:
//! K = 1 and diagonal matrices factor into Φ differences, K = 2 uses Genz's
//! BVND, and equicorrelated matrices with ρ ≥ 0 reduce to a one-factor 1-D
//! integral. Everything else goes through the Genz separation-of-variables
//! transform integrated by a randomized Richtmyer lattice whose shifts are
//! fixed by the caller's seed.

use std::sync::OnceLock;

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::normal::{norm_cdf, norm_interval, norm_pdf, norm_sf};
use super::quadrature::{integrate_adaptive, legendre_nodes};
use super::rng::stream_rng;

/// Default absolute error target.
pub const DEFAULT_TOL: f64 = 1e-5;
const LATTICE_SHIFTS: usize = 12;
const LATTICE_MIN_POINTS: usize = 1 << 9;
const LATTICE_MAX_POINTS: usize = 1 << 17;
const STRUCTURE_EPS: f64 = 1e-14;
// Above this the one-factor integrand is too narrow to be worth it.
const ONE_FACTOR_MAX_RHO: f64 = 0.999;

/// Box {lower < X < upper} for X ~ N(mean, covariance).
#[derive(Debug, Clone)]
pub struct MvnRect {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub mean: Vec<f64>,
    pub covariance: DMatrix<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MvnMethod {
    Univariate,
    Independent,
    Bivariate,
    OneFactor,
    Lattice,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MvnProb {
    pub value: f64,
    /// Absolute error estimate (three lattice standard errors; ~1e-14 for exact rules).
    pub error: f64,
    /// Some lower bound was not below its upper bound.
    pub empty: bool,
    pub method: MvnMethod,
}

impl MvnProb {
    fn empty(method: MvnMethod) -> Self {
        Self { value: 0.0, error: 0.0, empty: true, method }
    }
}

/// Pr(lower < X < upper) for X ~ N(mean, covariance).
pub fn mvn_rect_prob(rect: &MvnRect, tol: f64, seed: u64) -> Result<MvnProb> {
    let k = rect.mean.len();
    if k == 0 || rect.lower.len() != k || rect.upper.len() != k {
        return Err(Error::invalid("rectangle bounds and mean must share a nonzero length"));
    }
    let cov = &rect.covariance;
    if cov.nrows() != k || cov.ncols() != k {
        return Err(Error::Matrix(format!("covariance must be {k}x{k}")));
    }
    let mut sd = Vec::with_capacity(k);
    for i in 0..k {
        for j in 0..i {
            let scale = (cov[(i, i)].abs() * cov[(j, j)].abs()).sqrt().max(f64::MIN_POSITIVE);
            if (cov[(i, j)] - cov[(j, i)]).abs() > 1e-12 * scale {
                return Err(Error::Matrix("covariance is not symmetric".into()));
            }
        }
        if !(cov[(i, i)] > 0.0) {
            return Err(Error::Matrix("covariance diagonal must be positive".into()));
        }
        sd.push(cov[(i, i)].sqrt());
    }
    let corr = DMatrix::from_fn(k, k, |i, j| if i == j { 1.0 } else { cov[(i, j)] / (sd[i] * sd[j]) });
    let engine = MvnEngine::new(&corr, seed)?;
    let a: Vec<f64> = (0..k).map(|i| (rect.lower[i] - rect.mean[i]) / sd[i]).collect();
    let b: Vec<f64> = (0..k).map(|i| (rect.upper[i] - rect.mean[i]) / sd[i]).collect();
    Ok(engine.prob(&a, &b, tol))
}

#[derive(Debug, Clone)]
enum Structure {
    Univariate,
    Independent,
    Bivariate(f64),
    OneFactor(f64),
    Lattice,
}

/// Reusable evaluator for rectangles under a fixed correlation matrix.
///
/// Limits passed to [`MvnEngine::prob`] are standardized (unit variances).
/// The lattice shifts are drawn once, so repeated calls with the same
/// point count use common random numbers.
#[derive(Debug, Clone)]
pub struct MvnEngine {
    dim: usize,
    chol: DMatrix<f64>,
    structure: Structure,
    shifts: Vec<Vec<f64>>,
    generator: Vec<f64>,
}

impl MvnEngine {
    pub fn new(correlation: &DMatrix<f64>, seed: u64) -> Result<Self> {
        let k = correlation.nrows();
        if k == 0 || correlation.ncols() != k {
            return Err(Error::Matrix("correlation must be square and nonempty".into()));
        }
        for i in 0..k {
            if (correlation[(i, i)] - 1.0).abs() > 1e-12 {
                return Err(Error::Matrix("correlation must have a unit diagonal".into()));
            }
            for j in 0..i {
                if (correlation[(i, j)] - correlation[(j, i)]).abs() > 1e-12 {
                    return Err(Error::Matrix("correlation is not symmetric".into()));
                }
            }
        }
        let chol = correlation
            .clone()
            .cholesky()
            .map(|c| c.l())
            .ok_or_else(|| Error::Matrix("correlation is not positive definite".into()))?;
        let off: Vec<f64> = (0..k).flat_map(|i| (0..i).map(move |j| (i, j))).map(|(i, j)| correlation[(i, j)]).collect();
        let structure = if k == 1 {
            Structure::Univariate
        } else if off.iter().all(|r| r.abs() <= STRUCTURE_EPS) {
            Structure::Independent
        } else if k == 2 {
            Structure::Bivariate(off[0])
        } else if off.iter().all(|r| (r - off[0]).abs() <= STRUCTURE_EPS)
            && off[0] > 0.0
            && off[0] < ONE_FACTOR_MAX_RHO
        {
            Structure::OneFactor(off[0])
        } else {
            Structure::Lattice
        };
        let (shifts, generator) = if matches!(structure, Structure::Lattice) {
            let mut rng = stream_rng(seed, 0x6d76_6e5f_6c61_7474);
            let shifts = (0..LATTICE_SHIFTS)
                .map(|_| (0..k - 1).map(|_| rng.random::<f64>()).collect())
                .collect();
            let generator = PRIMES[..k - 1].iter().map(|&p| (p as f64).sqrt().fract()).collect();
            (shifts, generator)
        } else {
            (Vec::new(), Vec::new())
        };
        Ok(Self { dim: k, chol, structure, shifts, generator })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// True when every evaluation is deterministic quadrature (no lattice).
    pub fn is_exact(&self) -> bool {
        !matches!(self.structure, Structure::Lattice)
    }

    /// Pr(a < Z < b) for Z ~ N(0, R), to absolute error `tol`.
    pub fn prob(&self, a: &[f64], b: &[f64], tol: f64) -> MvnProb {
        debug_assert_eq!(a.len(), self.dim);
        debug_assert_eq!(b.len(), self.dim);
        let method = self.method();
        if a.iter().zip(b).any(|(l, u)| !(l < u)) {
            return MvnProb::empty(method);
        }
        let exact = |value: f64| MvnProb { value: value.clamp(0.0, 1.0), error: 1e-14, empty: false, method };
        match self.structure {
            Structure::Univariate => exact(norm_interval(a[0], b[0])),
            Structure::Independent => exact(a.iter().zip(b).map(|(&l, &u)| norm_interval(l, u)).product()),
            Structure::Bivariate(r) => exact(bvn_rect(a[0], b[0], a[1], b[1], r)),
            Structure::OneFactor(r) => exact(one_factor_rect(a, b, r)),
            Structure::Lattice => self.lattice(a, b, tol),
        }
    }

    fn method(&self) -> MvnMethod {
        match self.structure {
            Structure::Univariate => MvnMethod::Univariate,
            Structure::Independent => MvnMethod::Independent,
            Structure::Bivariate(_) => MvnMethod::Bivariate,
            Structure::OneFactor(_) => MvnMethod::OneFactor,
            Structure::Lattice => MvnMethod::Lattice,
        }
    }

    fn lattice(&self, a: &[f64], b: &[f64], tol: f64) -> MvnProb {
        let m = LATTICE_SHIFTS as f64;
        let mut n = LATTICE_MIN_POINTS;
        let mut y = vec![0.0; self.dim];
        let mut w = vec![0.0; self.dim];
        loop {
            let means: Vec<f64> = self
                .shifts
                .iter()
                .map(|shift| {
                    let mut acc = 0.0;
                    for i in 1..=n {
                        for j in 0..self.dim - 1 {
                            let x = (i as f64 * self.generator[j] + shift[j]).fract();
                            w[j] = (2.0 * x - 1.0).abs();
                        }
                        acc += self.sov(a, b, &w, &mut y);
                        for wj in w.iter_mut().take(self.dim - 1) {
                            *wj = 1.0 - *wj;
                        }
                        acc += self.sov(a, b, &w, &mut y);
                    }
                    acc / (2 * n) as f64
                })
                .collect();
            let mean = means.iter().sum::<f64>() / m;
            let var = means.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (m * (m - 1.0));
            let error = 3.0 * var.sqrt();
            if error <= tol || n >= LATTICE_MAX_POINTS {
                return MvnProb { value: mean.clamp(0.0, 1.0), error, empty: false, method: MvnMethod::Lattice };
            }
            n *= 2;
        }
    }

    // Genz separation of variables for one point w ∈ [0,1]^{K−1}.
    fn sov(&self, a: &[f64], b: &[f64], w: &[f64], y: &mut [f64]) -> f64 {
        let l = &self.chol;
        let mut d = norm_cdf(a[0] / l[(0, 0)]);
        let mut e = norm_cdf(b[0] / l[(0, 0)]);
        let mut f = e - d;
        for i in 1..self.dim {
            if f <= 0.0 {
                return 0.0;
            }
            let u = (d + w[i - 1] * (e - d)).clamp(1e-300, 1.0 - 1e-16);
            y[i - 1] = super::normal::norm_quantile(u).unwrap_or(0.0);
            let s: f64 = (0..i).map(|j| l[(i, j)] * y[j]).sum();
            let lii = l[(i, i)];
            d = norm_cdf((a[i] - s) / lii);
            e = norm_cdf((b[i] - s) / lii);
            f *= e - d;
        }
        f.max(0.0)
    }
}

const PRIMES: [u32; 24] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89];

/// Pr(a₁ < X < b₁, a₂ < Y < b₂) for a standard bivariate normal with correlation r.
pub fn bvn_rect(a1: f64, b1: f64, a2: f64, b2: f64, r: f64) -> f64 {
    if !(a1 < b1 && a2 < b2) {
        return 0.0;
    }
    let p = bvn_cdf(b1, b2, r) - bvn_cdf(a1, b2, r) - bvn_cdf(b1, a2, r) + bvn_cdf(a1, a2, r);
    p.clamp(0.0, 1.0)
}

/// Pr(X < x, Y < y) for a standard bivariate normal with correlation r.
pub fn bvn_cdf(x: f64, y: f64, r: f64) -> f64 {
    if x == f64::NEG_INFINITY || y == f64::NEG_INFINITY {
        return 0.0;
    }
    if x == f64::INFINITY {
        return norm_cdf(y);
    }
    if y == f64::INFINITY {
        return norm_cdf(x);
    }
    bvnu(-x, -y, r)
}

fn gl_small(n: usize) -> &'static (Vec<f64>, Vec<f64>) {
    static R6: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    static R12: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    static R20: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    match n {
        6 => R6.get_or_init(|| legendre_nodes(6)),
        12 => R12.get_or_init(|| legendre_nodes(12)),
        _ => R20.get_or_init(|| legendre_nodes(20)),
    }
}

/// Upper orthant Pr(X > h, Y > k) (Genz 2004, BVND).
pub fn bvnu(h: f64, k: f64, r: f64) -> f64 {
    const TWOPI: f64 = std::f64::consts::TAU;
    let n = if r.abs() < 0.3 {
        6
    } else if r.abs() < 0.75 {
        12
    } else {
        20
    };
    let (xs, ws) = gl_small(n);
    let mut hk = h * k;
    let mut bvn = 0.0;
    if r.abs() < 0.925 {
        let hs = 0.5 * (h * h + k * k);
        let asr = r.asin();
        for (&x, &w) in xs.iter().zip(ws) {
            let sn = (0.5 * asr * (x + 1.0)).sin();
            bvn += w * ((sn * hk - hs) / (1.0 - sn * sn)).exp();
        }
        bvn = bvn * asr / (2.0 * TWOPI) + norm_sf(h) * norm_sf(k);
        return bvn.clamp(0.0, 1.0);
    }
    let mut kk = k;
    if r < 0.0 {
        kk = -kk;
        hk = -hk;
    }
    if r.abs() < 1.0 {
        let as_ = (1.0 - r) * (1.0 + r);
        let mut a = as_.sqrt();
        let bs = (h - kk) * (h - kk);
        let c = (4.0 - hk) / 8.0;
        let d = (12.0 - hk) / 16.0;
        bvn = a * (-(bs / as_ + hk) / 2.0).exp() * (1.0 - c * (bs - as_) * (1.0 - d * bs / 5.0) / 3.0 + c * d * as_ * as_ / 5.0);
        if hk > -160.0 {
            let b = bs.sqrt();
            bvn -= (-hk / 2.0).exp() * TWOPI.sqrt() * norm_cdf(-b / a) * b * (1.0 - c * bs * (1.0 - d * bs / 5.0) / 3.0);
        }
        a /= 2.0;
        for (&x, &w) in xs.iter().zip(ws) {
            let xs_ = as_ * (x + 1.0) * (x + 1.0) / 4.0;
            let rs = (1.0 - xs_).sqrt();
            bvn += a * w * (-(bs / xs_ + hk) / 2.0).exp() * ((-hk * (1.0 - rs) / (2.0 * (1.0 + rs))).exp() / rs - (1.0 + c * xs_ * (1.0 + d * xs_)));
        }
        bvn = -bvn / TWOPI;
    }
    if r > 0.0 {
        bvn += norm_sf(h.max(kk));
    } else {
        bvn = -bvn;
        if kk > h {
            if h < 0.0 {
                bvn += norm_cdf(kk) - norm_cdf(h);
            } else {
                bvn += norm_sf(h) - norm_sf(kk);
            }
        }
    }
    bvn.clamp(0.0, 1.0)
}

// X_k = √ρ Z + √(1−ρ) E_k; integrate the conditional product over Z.
fn one_factor_rect(a: &[f64], b: &[f64], rho: f64) -> f64 {
    let sr = rho.sqrt();
    let se = (1.0 - rho).sqrt();
    // Outside this window some factor is below Φ(−9) or the weight is negligible.
    let zlo = a.iter().map(|&l| (l - 9.0 * se) / sr).fold(-9.0, f64::max);
    let zhi = b.iter().map(|&u| (u + 9.0 * se) / sr).fold(9.0, f64::min);
    if !(zhi > zlo) {
        return 0.0;
    }
    let f = |z: f64| {
        let m = sr * z;
        let mut p = norm_pdf(z);
        for (&l, &u) in a.iter().zip(b) {
            p *= norm_interval((l - m) / se, (u - m) / se);
        }
        p
    };
    integrate_adaptive(f, zlo, zhi, 1e-14)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rect(k: usize, lo: f64, hi: f64, corr: DMatrix<f64>) -> MvnRect {
        MvnRect { lower: vec![lo; k], upper: vec![hi; k], mean: vec![0.0; k], covariance: corr }
    }

    fn equi(k: usize, r: f64) -> DMatrix<f64> {
        DMatrix::from_fn(k, k, |i, j| if i == j { 1.0 } else { r })
    }

    #[test]
    fn univariate_is_phi_difference() {
        let r = rect(1, -1.96, 1.96, DMatrix::identity(1, 1));
        let p = mvn_rect_prob(&r, DEFAULT_TOL, 0).unwrap();
        assert_eq!(p.method, MvnMethod::Univariate);
        assert!((p.value - (norm_cdf(1.96) - norm_cdf(-1.96))).abs() < 1e-15);
    }

    #[test]
    fn empty_box_is_flagged() {
        let mut r = rect(2, -1.0, 1.0, DMatrix::identity(2, 2));
        r.upper[1] = -2.0;
        let p = mvn_rect_prob(&r, DEFAULT_TOL, 0).unwrap();
        assert!(p.empty);
        assert_eq!(p.value, 0.0);
    }

    #[test]
    fn non_pd_is_matrix_error() {
        let r = rect(2, -1.0, 1.0, DMatrix::from_row_slice(2, 2, &[1.0, 1.5, 1.5, 1.0]));
        assert!(matches!(mvn_rect_prob(&r, DEFAULT_TOL, 0), Err(Error::Matrix(_))));
        let r = rect(3, -1.0, 1.0, equi(3, -0.6));
        assert!(matches!(mvn_rect_prob(&r, DEFAULT_TOL, 0), Err(Error::Matrix(_))));
    }

    #[test]
    fn bvn_reference_values() {
        // Orthant probability at zero: 1/4 + asin(r)/(2π).
        for &r in &[-0.95, -0.5, 0.0, 0.3, 0.8, 0.93, 0.99] {
            let want = 0.25 + f64::asin(r) / std::f64::consts::TAU;
            assert!((bvnu(0.0, 0.0, r) - want).abs() < 1e-15, "r={r}");
        }
    }

    #[test]
    fn bvn_symmetry_in_arguments() {
        for &r in &[-0.97, -0.4, 0.2, 0.6, 0.95] {
            for &(h, k) in &[(0.3, -1.2), (1.5, 0.2), (-2.0, -0.7)] {
                assert!((bvnu(h, k, r) - bvnu(k, h, r)).abs() < 1e-15);
                // Pr(X>h, Y>k) + Pr(X>h, Y<k) = Pr(X>h)
                let split = bvnu(h, k, r) + bvnu(h, -k, -r);
                assert!((split - norm_sf(h)).abs() < 1e-14, "r={r} h={h} k={k}");
            }
        }
    }

    #[test]
    fn one_factor_matches_bivariate() {
        // Equicorrelated K=2 has both exact routes available.
        for &r in &[0.1, 0.5, 0.9] {
            let a = [-0.7, -1.3];
            let b = [1.1, 0.4];
            let direct = bvn_rect(a[0], b[0], a[1], b[1], r);
            let factor = one_factor_rect(&a, &b, r);
            assert!((direct - factor).abs() < 1e-12, "r={r}: {direct} vs {factor}");
        }
    }

    #[test]
    fn lattice_matches_one_factor() {
        // Perturb one entry so the general path is taken, then compare with
        // the exact rule at the unperturbed matrix.
        let c = equi(3, 0.5);
        let mut c2 = c.clone();
        c2[(0, 1)] = 0.5 + 1e-9;
        c2[(1, 0)] = 0.5 + 1e-9;
        let a = [-1.0, -0.5, -2.0];
        let b = [1.0, 1.5, 0.3];
        let exact = MvnEngine::new(&c, 3).unwrap().prob(&a, &b, 1e-6);
        let eng = MvnEngine::new(&c2, 3).unwrap();
        assert!(!eng.is_exact());
        let qmc = eng.prob(&a, &b, 1e-6);
        assert_eq!(exact.method, MvnMethod::OneFactor);
        assert!((exact.value - qmc.value).abs() < 3e-6, "{} vs {}", exact.value, qmc.value);
        assert!(qmc.error <= 1e-6);
    }

    #[test]
    fn lattice_is_deterministic_given_seed() {
        let c = DMatrix::from_row_slice(3, 3, &[1.0, 0.3, 0.1, 0.3, 1.0, 0.6, 0.1, 0.6, 1.0]);
        let r = MvnRect { lower: vec![-1.0; 3], upper: vec![1.0, 2.0, 0.5], mean: vec![0.0; 3], covariance: c };
        let p1 = mvn_rect_prob(&r, 1e-5, 11).unwrap();
        let p2 = mvn_rect_prob(&r, 1e-5, 11).unwrap();
        assert_eq!(p1.value.to_bits(), p2.value.to_bits());
    }
}
