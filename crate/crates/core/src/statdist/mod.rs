//! Distributions, quadrature, sampling and rectangle probabilities.

pub mod chi;
pub mod mvn;
pub mod normal;
pub mod quadrature;
pub mod rng;
pub mod special;
pub mod student;
pub mod wishart;

pub use chi::SigmaHatLaw;
pub use mvn::{mvn_rect_prob, MvnEngine, MvnMethod, MvnProb, MvnRect};
pub use normal::{norm_cdf, norm_interval, norm_pdf, norm_quantile, norm_sf};
pub use quadrature::{QuadratureKind, QuadratureRule};
pub use student::{t_quantile, t_sf};
pub use wishart::sample_wishart_diag;

use crate::error::Result;

/// Density of σ̂₁ at x under `law`.
pub fn sigma_hat_density(x: f64, law: &SigmaHatLaw) -> Result<f64> {
    law.density(x)
}

/// E[g(σ̂₁)] by adaptive Gauss–Legendre over the central 1 − 1e-10 mass,
/// optionally truncated to σ̂₁ < `upper`.
pub fn sigma_hat_expect<G: FnMut(f64) -> f64>(law: &SigmaHatLaw, upper: f64, mut g: G) -> f64 {
    let (lo, hi) = law.support();
    let hi = hi.min(upper);
    if !(hi > lo) {
        return 0.0;
    }
    quadrature::integrate_adaptive(|x| g(x) * law.density_unchecked(x), lo, hi, quadrature::ADAPTIVE_TOL)
}
