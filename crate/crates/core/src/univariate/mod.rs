//! Univariate procedures: TOST and its size-matching adjustments.
//!
//! Every procedure here is a member (t, c) of the family that rejects H₀ iff
//! |θ̂| < c − tσ̂₁. The adjustments pick (t, c) so that the size
//! ω(c₀, σ̂₁, ν₂, t, c) equals α₀ with σ̂₁ plugged in for σ₁.

mod calibration;

pub use calibration::{
    build_calibration_table, ctost_star_calibrate, default_nu_grid, default_sigma_grid, CalibrationOptions,
    CalibrationStrategy, CalibrationTable, TABLE_HEADER,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{DecisionParts, DecisionReport, EquivalenceSpec, Method};
use crate::powerkernel::{omega, omega_t0, omega_t0_dc};
use crate::roots::{bisect_increasing, newton_bracketed};
use crate::statdist::{norm_interval, norm_pdf, norm_quantile, t_quantile};

/// Iteration cap shared by the univariate solvers.
pub const MAX_ITER: usize = 100;
/// Size residual targeted by the t = 0 margin solver.
pub const CTOST_FTOL: f64 = 1e-13;
/// Size residual targeted by the α- and δ-TOST bisections.
pub const BISECT_FTOL: f64 = 1e-11;

/// Canonical univariate summary (θ̂, σ̂₁, ν₂).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnivSummary {
    pub theta_hat: f64,
    pub sigma1_hat: f64,
    pub nu2: u32,
}

impl UnivSummary {
    pub fn new(theta_hat: f64, sigma1_hat: f64, nu2: u32) -> Result<Self> {
        let s = Self { theta_hat, sigma1_hat, nu2 };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        check_sigma_nu(self.sigma1_hat, self.nu2)?;
        if !self.theta_hat.is_finite() {
            return Err(Error::domain("theta_hat must be finite"));
        }
        Ok(())
    }
}

fn check_sigma_nu(sigma1_hat: f64, nu2: u32) -> Result<()> {
    if !(sigma1_hat > 0.0 && sigma1_hat.is_finite()) {
        return Err(Error::domain(format!("sigma1_hat must be positive, got {sigma1_hat}")));
    }
    if nu2 == 0 {
        return Err(Error::domain("nu2 must be at least 1"));
    }
    Ok(())
}

/// The (t, c) pair chosen by a univariate procedure plus diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnivAdjustment {
    pub method: Method,
    pub t_used: f64,
    pub c_used: f64,
    /// Adjusted level α* (α-TOST only).
    pub alpha_adj: Option<f64>,
    /// Calibrated level α_c (cTOST* only).
    pub alpha_c: Option<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Size at the chosen (t, c) minus its target.
    pub residual: f64,
    /// α-TOST hit α = 0.5 without reaching α₀.
    pub saturated: bool,
    /// cTOST* update exceeded α₀ and was clamped.
    pub clamped: bool,
    /// Monte Carlo standard error of α_c (Monte Carlo calibration only).
    pub mc_stderr: Option<f64>,
}

impl UnivAdjustment {
    fn plain(method: Method, t: f64, c: f64) -> Self {
        Self {
            method,
            t_used: t,
            c_used: c,
            alpha_adj: None,
            alpha_c: None,
            iterations: 0,
            converged: true,
            residual: 0.0,
            saturated: false,
            clamped: false,
            mc_stderr: None,
        }
    }

    /// Effective margin c − tσ̂₁.
    pub fn effective_margin(&self, sigma1_hat: f64) -> f64 {
        self.c_used - self.t_used * sigma1_hat
    }
}

/// Unadjusted TOST: (t, c) = (t_{α₀,ν₂}, c₀).
pub fn tost_adjust(sigma1_hat: f64, nu2: u32, spec: &EquivalenceSpec) -> Result<UnivAdjustment> {
    spec.validate()?;
    check_sigma_nu(sigma1_hat, nu2)?;
    let t = t_quantile(spec.alpha0, nu2)?;
    let mut adj = UnivAdjustment::plain(Method::Tost, t, spec.c0);
    adj.residual = omega(spec.c0, sigma1_hat, nu2, t, spec.c0) - spec.alpha0;
    Ok(adj)
}

/// Margin c with Φ((c − c₀)/σ) − Φ((−c − c₀)/σ) = `level` (the t = 0 member).
///
/// Newton from c₀ − σΦ⁻¹(1 − level) (or c₀ when that is not positive),
/// safeguarded by bisection on (0, c₀ + 10σ).
pub fn matched_margin_t0(sigma: f64, c0: f64, level: f64) -> Result<crate::roots::Root> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::domain(format!("target size must lie in (0, 1), got {level}")));
    }
    let z = norm_quantile(1.0 - level)?;
    let x0 = if c0 > sigma * z { c0 - sigma * z } else { c0 };
    let mut hi = c0 + 10.0 * sigma;
    // Levels close to one need a wider bracket than the default.
    while omega_t0(c0, sigma, hi) < level {
        hi += 10.0 * sigma;
    }
    newton_bracketed(
        |c| (omega_t0(c0, sigma, c) - level, omega_t0_dc(c0, sigma, c)),
        0.0,
        hi,
        x0,
        CTOST_FTOL * level.max(1e-3),
        1e-15,
        MAX_ITER,
        "ctost_margin",
    )
}

/// cTOST: t = 0 and ĉ(0) solving ω(c₀, σ̂₁, ν₂, 0, c) = α₀.
pub fn ctost_adjust(sigma1_hat: f64, nu2: u32, spec: &EquivalenceSpec) -> Result<UnivAdjustment> {
    spec.validate()?;
    check_sigma_nu(sigma1_hat, nu2)?;
    let root = matched_margin_t0(sigma1_hat, spec.c0, spec.alpha0)?;
    let mut adj = UnivAdjustment::plain(Method::Ctost, 0.0, root.x);
    adj.iterations = root.iterations;
    adj.residual = root.residual;
    Ok(adj)
}

/// Margin c with ω(c₀, σ, ν₂, t, c) = `target` for a fixed t ≥ 0.
pub fn matched_margin(sigma: f64, nu2: u32, t: f64, c0: f64, target: f64) -> Result<crate::roots::Root> {
    if t == 0.0 {
        return matched_margin_t0(sigma, c0, target);
    }
    let f = |c: f64| omega(c0, sigma, nu2, t, c) - target;
    let mut hi = c0 + (t + 10.0) * sigma;
    let mut guard = 0;
    while f(hi) < 0.0 {
        hi *= 2.0;
        guard += 1;
        if guard > 60 {
            return Err(Error::domain("no margin reaches the target size"));
        }
    }
    bisect_increasing(f, 0.0, hi, BISECT_FTOL, 1e-15, MAX_ITER, "matched_margin")
}

/// α-TOST: c = c₀ and the level α* ∈ [α₀, 0.5] at which the size is α₀.
pub fn alpha_tost_adjust(sigma1_hat: f64, nu2: u32, spec: &EquivalenceSpec) -> Result<UnivAdjustment> {
    spec.validate()?;
    check_sigma_nu(sigma1_hat, nu2)?;
    let (c0, a0) = (spec.c0, spec.alpha0);
    let size_at = |alpha: f64| -> f64 {
        let t = if alpha >= 0.5 { 0.0 } else { t_quantile(alpha, nu2).expect("alpha in (0, 0.5)") };
        omega(c0, sigma1_hat, nu2, t, c0)
    };
    let top = size_at(0.5);
    if top < a0 {
        let mut adj = UnivAdjustment::plain(Method::AlphaTost, 0.0, c0);
        adj.alpha_adj = Some(0.5);
        adj.saturated = true;
        adj.residual = top - a0;
        return Ok(adj);
    }
    let bottom = size_at(a0) - a0;
    let root = if bottom >= 0.0 {
        crate::roots::Root { x: a0, residual: bottom, iterations: 0 }
    } else {
        bisect_increasing(|a| size_at(a) - a0, a0, 0.5, BISECT_FTOL, 1e-15, MAX_ITER, "alpha_tost")?
    };
    let t = if root.x >= 0.5 { 0.0 } else { t_quantile(root.x, nu2)? };
    let mut adj = UnivAdjustment::plain(Method::AlphaTost, t, c0);
    adj.alpha_adj = Some(root.x);
    adj.iterations = root.iterations;
    adj.residual = root.residual;
    Ok(adj)
}

/// δ-TOST: t = t_{α₀,ν₂} and the margin c* at which the size is α₀.
pub fn delta_tost_adjust(sigma1_hat: f64, nu2: u32, spec: &EquivalenceSpec) -> Result<UnivAdjustment> {
    spec.validate()?;
    check_sigma_nu(sigma1_hat, nu2)?;
    let t = t_quantile(spec.alpha0, nu2)?;
    let root = matched_margin(sigma1_hat, nu2, t, spec.c0, spec.alpha0)?;
    let mut adj = UnivAdjustment::plain(Method::DeltaTost, t, root.x);
    adj.iterations = root.iterations;
    adj.residual = root.residual;
    Ok(adj)
}

/// Known-σ matched margin c(z): the member rejecting iff |θ̂| < c − zσ
/// with size exactly α₀ when σ is known, i.e. the root in c of
/// Φ((c − c₀)/σ − z) − Φ(−(c + c₀)/σ + z) = α₀.
pub fn known_sigma_margin(z: f64, sigma: f64, c0: f64, alpha0: f64) -> Result<f64> {
    let size = |c: f64| norm_interval(-(c + c0) / sigma + z, (c - c0) / sigma - z);
    let dsize = |c: f64| {
        let (a, b) = (-(c + c0) / sigma + z, (c - c0) / sigma - z);
        if a < b {
            (norm_pdf(a) + norm_pdf(b)) / sigma
        } else {
            0.0
        }
    };
    let hi = c0 + (z.abs() + 10.0) * sigma;
    let root = newton_bracketed(
        |c| (size(c) - alpha0, dsize(c)),
        0.0,
        hi,
        c0 + z * sigma,
        1e-15,
        1e-16,
        MAX_ITER,
        "known_sigma_margin",
    )?;
    Ok(root.x)
}

/// Options for [`univariate_decide`].
#[derive(Debug, Clone, Default)]
pub struct UnivOptions<'a> {
    pub calibration: CalibrationOptions<'a>,
}

/// Adjustment for the method named in `spec`.
pub fn adjust(sigma1_hat: f64, nu2: u32, spec: &EquivalenceSpec, opts: &UnivOptions) -> Result<UnivAdjustment> {
    match spec.method {
        Method::Tost => tost_adjust(sigma1_hat, nu2, spec),
        Method::AlphaTost => alpha_tost_adjust(sigma1_hat, nu2, spec),
        Method::DeltaTost => delta_tost_adjust(sigma1_hat, nu2, spec),
        Method::Ctost => ctost_adjust(sigma1_hat, nu2, spec),
        Method::CtostStar => ctost_star_calibrate(sigma1_hat, nu2, spec, &opts.calibration),
    }
}

/// Decision report for a given adjustment.
pub fn decide_with(s: &UnivSummary, spec: &EquivalenceSpec, adj: &UnivAdjustment) -> DecisionReport {
    let mut report = DecisionParts {
        method: adj.method,
        spec,
        nu2: s.nu2,
        theta_hat: &[s.theta_hat],
        sigma1_hat: &[s.sigma1_hat],
        t: vec![adj.t_used],
        c: vec![adj.c_used],
    }
    .into_report();
    report.alpha_adjusted = adj.alpha_adj;
    report.alpha_c = adj.alpha_c;
    report.saturated = adj.saturated;
    if adj.saturated {
        report.warnings.push("alpha-TOST saturated at alpha = 0.5".into());
    }
    if adj.clamped {
        report.warnings.push("calibrated level exceeded alpha0 and was clamped".into());
    }
    report
}

/// TOST decision: reject iff θ̂ ± t_{α₀,ν₂}σ̂₁ lies inside (−c₀, c₀).
pub fn tost_decide(s: &UnivSummary, spec: &EquivalenceSpec) -> Result<DecisionReport> {
    s.validate()?;
    Ok(decide_with(s, spec, &tost_adjust(s.sigma1_hat, s.nu2, spec)?))
}

/// cTOST decision: reject iff |θ̂| < ĉ(0) (or c̃(0) when `refined`).
pub fn ctost_decide(s: &UnivSummary, spec: &EquivalenceSpec, refined: bool, cal: &CalibrationOptions) -> Result<DecisionReport> {
    s.validate()?;
    let adj = if refined {
        ctost_star_calibrate(s.sigma1_hat, s.nu2, spec, cal)?
    } else {
        ctost_adjust(s.sigma1_hat, s.nu2, spec)?
    };
    Ok(decide_with(s, spec, &adj))
}

/// Decision for the method named in `spec`.
pub fn univariate_decide(s: &UnivSummary, spec: &EquivalenceSpec, opts: &UnivOptions) -> Result<DecisionReport> {
    s.validate()?;
    let adj = adjust(s.sigma1_hat, s.nu2, spec, opts)?;
    Ok(decide_with(s, spec, &adj))
}
