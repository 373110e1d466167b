//! Chi-square distribution and the sampling law of σ̂₁.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::roots::newton_bracketed;

use super::special::{ln_gamma, reg_inc_gamma_lower, reg_inc_gamma_upper};

/// Mass left outside [`SigmaHatLaw::support`].
pub const TAIL_MASS: f64 = 1e-10;

pub fn chi2_pdf(x: f64, k: f64) -> f64 {
    if x <= 0.0 {
        return if x == 0.0 && k == 2.0 { 0.5 } else { 0.0 };
    }
    chi2_ln_pdf(x, k).exp()
}

fn chi2_ln_pdf(x: f64, k: f64) -> f64 {
    (0.5 * k - 1.0) * x.ln() - 0.5 * x - 0.5 * k * std::f64::consts::LN_2 - ln_gamma(0.5 * k)
}

pub fn chi2_cdf(x: f64, k: f64) -> f64 {
    reg_inc_gamma_lower(0.5 * k, 0.5 * x)
}

pub fn chi2_sf(x: f64, k: f64) -> f64 {
    reg_inc_gamma_upper(0.5 * k, 0.5 * x)
}

/// Lower-tail quantile: Pr(X ≤ x) = p.
pub fn chi2_quantile(p: f64, k: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) || !(k > 0.0) {
        return Err(Error::domain(format!("chi-square quantile requires 0 < p < 1, k > 0; got p={p}, k={k}")));
    }
    if p > 0.5 {
        return chi2_isf(1.0 - p, k);
    }
    // Solve ln P(x) = ln p in u = ln x, where ln P is increasing and smooth.
    let lp = p.ln();
    let g = |u: f64| {
        let x = u.exp();
        let cdf = chi2_cdf(x, k);
        let v = cdf.ln() - lp;
        let d = (chi2_ln_pdf(x, k) + u).exp() / cdf;
        (v, d)
    };
    solve_log(g, k, "chi2_quantile")
}

/// Upper-tail quantile: Pr(X > x) = q.
pub fn chi2_isf(q: f64, k: f64) -> Result<f64> {
    if !(q > 0.0 && q < 1.0) || !(k > 0.0) {
        return Err(Error::domain(format!("chi-square quantile requires 0 < q < 1, k > 0; got q={q}, k={k}")));
    }
    if q > 0.5 {
        return chi2_quantile(1.0 - q, k);
    }
    let lq = q.ln();
    // −ln Q(x) + ln q is increasing in u = ln x.
    let g = |u: f64| {
        let x = u.exp();
        let sf = chi2_sf(x, k);
        let v = lq - sf.ln();
        let d = (chi2_ln_pdf(x, k) + u).exp() / sf;
        (v, d)
    };
    solve_log(g, k, "chi2_isf")
}

fn solve_log<G: FnMut(f64) -> (f64, f64)>(mut g: G, k: f64, name: &'static str) -> Result<f64> {
    let mut lo = k.ln() - 2.0;
    while g(lo).0 > 0.0 {
        lo -= 4.0;
        if lo < -1400.0 {
            return Err(Error::domain("chi-square quantile underflow"));
        }
    }
    let mut hi = k.ln() + 1.0;
    while g(hi).0 < 0.0 {
        hi += 1.0;
        if hi > 700.0 {
            return Err(Error::domain("chi-square quantile overflow"));
        }
    }
    let root = newton_bracketed(g, lo, hi, 0.5 * (lo + hi), 1e-14, 1e-15, 300, name)?;
    Ok(root.x.exp())
}

/// Law of σ̂₁ when ν₂σ̂₁²/σ₁² follows χ²(ν₂).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SigmaHatLaw {
    pub sigma1: f64,
    pub nu2: u32,
}

impl SigmaHatLaw {
    pub fn new(sigma1: f64, nu2: u32) -> Result<Self> {
        if !(sigma1 > 0.0 && sigma1.is_finite()) {
            return Err(Error::domain(format!("sigma1 must be positive, got {sigma1}")));
        }
        if nu2 == 0 {
            return Err(Error::domain("nu2 must be at least 1"));
        }
        Ok(Self { sigma1, nu2 })
    }

    /// Density at x > 0.
    pub fn density(&self, x: f64) -> Result<f64> {
        if !(x > 0.0) {
            return Err(Error::domain(format!("sigma-hat density requires x > 0, got {x}")));
        }
        Ok(self.density_unchecked(x))
    }

    #[inline]
    pub(crate) fn density_unchecked(&self, x: f64) -> f64 {
        let nu = self.nu2 as f64;
        let s2 = self.sigma1 * self.sigma1;
        let y = nu * x * x / s2;
        (chi2_ln_pdf(y, nu) + (2.0 * nu * x / s2).ln()).exp()
    }

    pub fn mode(&self) -> f64 {
        let nu = self.nu2 as f64;
        self.sigma1 * ((nu - 1.0) / nu).sqrt()
    }

    /// Pr(σ̂₁ ≤ x).
    pub fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        let nu = self.nu2 as f64;
        chi2_cdf(nu * x * x / (self.sigma1 * self.sigma1), nu)
    }

    /// Interval holding all but [`TAIL_MASS`] of the law, split evenly.
    pub fn support(&self) -> (f64, f64) {
        let nu = self.nu2 as f64;
        let lo = chi2_quantile(0.5 * TAIL_MASS, nu).expect("valid chi-square quantile");
        let hi = chi2_isf(0.5 * TAIL_MASS, nu).expect("valid chi-square quantile");
        let scale = self.sigma1 / nu.sqrt();
        (scale * lo.sqrt(), scale * hi.sqrt())
    }

    /// Draw from the law given a standard chi-square draw with ν₂ df.
    #[inline]
    pub fn from_chi2(&self, chi2: f64) -> f64 {
        self.sigma1 * (chi2 / self.nu2 as f64).sqrt()
    }
}
