//! Student t distribution (upper-tail conventions).

use crate::error::{Error, Result};
use crate::roots::newton_bracketed;

use super::normal::norm_quantile;
use super::special::{ln_gamma, reg_inc_beta};

/// Density of the t law with `nu` degrees of freedom.
pub fn t_pdf(x: f64, nu: f64) -> f64 {
    let ln_c = ln_gamma(0.5 * (nu + 1.0))
        - ln_gamma(0.5 * nu)
        - 0.5 * (nu * std::f64::consts::PI).ln();
    (ln_c - 0.5 * (nu + 1.0) * (x * x / nu).ln_1p()).exp()
}

/// Survival function Pr(T > x).
pub fn t_sf(x: f64, nu: f64) -> f64 {
    if x == 0.0 {
        return 0.5;
    }
    let tail = 0.5 * reg_inc_beta(0.5 * nu, 0.5, nu / (nu + x * x));
    if x > 0.0 {
        tail
    } else {
        1.0 - tail
    }
}

/// Upper-tail quantile t_{α,ν}: the point with Pr(T > t) = α.
pub fn t_quantile(alpha: f64, nu2: u32) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::domain(format!("t quantile requires 0 < alpha < 1, got {alpha}")));
    }
    if nu2 == 0 {
        return Err(Error::domain("t quantile requires nu2 >= 1"));
    }
    if alpha == 0.5 {
        return Ok(0.0);
    }
    if alpha > 0.5 {
        return t_quantile(1.0 - alpha, nu2).map(|q| -q);
    }
    let nu = nu2 as f64;
    // Closed forms exist for one and two degrees of freedom.
    if nu2 == 1 {
        return Ok((std::f64::consts::PI * (0.5 - alpha)).tan());
    }
    if nu2 == 2 {
        let a = 4.0 * alpha * (1.0 - alpha);
        return Ok(2.0 * (0.5 - alpha) * (2.0 / a).sqrt());
    }
    let z = -norm_quantile(alpha)?;
    let mut hi = z.max(1.0);
    while t_sf(hi, nu) > alpha {
        hi *= 2.0;
        if !hi.is_finite() {
            return Err(Error::domain("t quantile bracket overflow"));
        }
    }
    // g(x) = α − sf(x) is increasing in x with derivative pdf(x).
    let root = newton_bracketed(
        |x| (alpha - t_sf(x, nu), t_pdf(x, nu)),
        0.0,
        hi,
        z,
        1e-15 * alpha,
        1e-15,
        200,
        "t_quantile",
    )?;
    Ok(root.x)
}
