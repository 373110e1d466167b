//! Multivariate procedures.
//!
//! The multivariate test rejects H₀ iff every marginal test rejects. Its
//! size is ω_K at the worst-case null point λ. The corrected version keeps
//! t = 0 and picks margins c_k with equal marginal sizes γ, chosen so that
//! ω_K(λ, c) = α₀; by the Fréchet inequality γ ≥ α₀.

mod lambda;

pub use lambda::{search_faces, LambdaResult, COORD_TOL};

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{DecisionParts, DecisionReport, EquivalenceSpec, Method};
use crate::powerkernel::{is_identity, omega, omega_t0, rect_t0, WishartEvaluator, DEFAULT_WISHART_DRAWS};
use crate::roots::bisect_increasing;
use crate::statdist::mvn::MvnEngine;
use crate::statdist::t_quantile;
use crate::univariate::matched_margin_t0;

/// Eigenvalues below this fraction of the largest are raised to it.
pub const PD_CLIP: f64 = 1e-8;
/// Default stop on |ω_K(λ, c) − α₀|.
pub const DEFAULT_TOL: f64 = 1e-6;
pub const DEFAULT_MAX_OUTER: usize = 50;
/// Inner γ-loop stop on |Δγ|.
pub const GAMMA_TOL: f64 = 1e-8;
/// Smallest accepted fixed-point tolerance; the lattice MVN cannot resolve less.
pub const MIN_TOL: f64 = 1e-12;
const MAX_INNER: usize = 10_000;

/// Canonical multivariate summary (θ̂, σ̂₁, R̂, ν₂), Σ̂₁ = diag(σ̂₁) R̂ diag(σ̂₁).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MvtSummary {
    pub theta_hat: Vec<f64>,
    pub sigma1_hat: Vec<f64>,
    pub correlation_hat: DMatrix<f64>,
    pub nu2: u32,
}

impl MvtSummary {
    /// Validated summary; the correlation must already be positive definite.
    pub fn new(theta_hat: Vec<f64>, sigma1_hat: Vec<f64>, correlation_hat: DMatrix<f64>, nu2: u32) -> Result<Self> {
        let s = Self { theta_hat, sigma1_hat, correlation_hat, nu2 };
        s.validate()?;
        Ok(s)
    }

    /// Like [`MvtSummary::new`] but repairs a non-PD correlation by
    /// eigenvalue clipping, returning a warning when it does.
    pub fn with_repair(
        theta_hat: Vec<f64>,
        sigma1_hat: Vec<f64>,
        correlation_hat: DMatrix<f64>,
        nu2: u32,
    ) -> Result<(Self, Vec<String>)> {
        let mut s = Self { theta_hat, sigma1_hat, correlation_hat, nu2 };
        s.validate_shape()?;
        let mut warnings = Vec::new();
        if s.correlation_hat.clone().cholesky().is_none() {
            s.correlation_hat = repair_correlation(&s.correlation_hat)?;
            warnings.push(format!(
                "correlation matrix was not positive definite; eigenvalues clipped at {PD_CLIP:e} of the largest"
            ));
        }
        s.validate()?;
        Ok((s, warnings))
    }

    /// Independent coordinates with identity correlation.
    pub fn independent(theta_hat: Vec<f64>, sigma1_hat: Vec<f64>, nu2: u32) -> Result<Self> {
        let k = theta_hat.len();
        Self::new(theta_hat, sigma1_hat, DMatrix::identity(k, k), nu2)
    }

    pub fn dim(&self) -> usize {
        self.theta_hat.len()
    }

    fn validate_shape(&self) -> Result<()> {
        let k = self.dim();
        if k == 0 || self.sigma1_hat.len() != k {
            return Err(Error::invalid("theta_hat and sigma1_hat must share a nonzero length"));
        }
        if self.correlation_hat.nrows() != k || self.correlation_hat.ncols() != k {
            return Err(Error::Matrix(format!("correlation must be {k}x{k}")));
        }
        if self.nu2 == 0 {
            return Err(Error::domain("nu2 must be at least 1"));
        }
        for i in 0..k {
            if !(self.sigma1_hat[i] > 0.0 && self.sigma1_hat[i].is_finite()) {
                return Err(Error::domain(format!("sigma1_hat[{i}] must be positive")));
            }
            if !self.theta_hat[i].is_finite() {
                return Err(Error::domain(format!("theta_hat[{i}] must be finite")));
            }
            if (self.correlation_hat[(i, i)] - 1.0).abs() > 1e-12 {
                return Err(Error::Matrix("correlation must have a unit diagonal".into()));
            }
            for j in 0..i {
                let (a, b) = (self.correlation_hat[(i, j)], self.correlation_hat[(j, i)]);
                if (a - b).abs() > 1e-12 || !(a.abs() <= 1.0) {
                    return Err(Error::Matrix("correlation must be symmetric with entries in [-1, 1]".into()));
                }
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.validate_shape()?;
        if self.correlation_hat.clone().cholesky().is_none() {
            return Err(Error::Matrix("correlation is not positive definite".into()));
        }
        Ok(())
    }

    /// Permute coordinates: new coordinate i is old coordinate `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let k = self.dim();
        Self {
            theta_hat: perm.iter().map(|&p| self.theta_hat[p]).collect(),
            sigma1_hat: perm.iter().map(|&p| self.sigma1_hat[p]).collect(),
            correlation_hat: DMatrix::from_fn(k, k, |i, j| self.correlation_hat[(perm[i], perm[j])]),
            nu2: self.nu2,
        }
    }
}

/// Nearest-in-spectrum PD correlation: clip eigenvalues at `PD_CLIP` times
/// the largest, rebuild, and rescale to a unit diagonal.
pub fn repair_correlation(r: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let k = r.nrows();
    let eig = SymmetricEigen::new(r.clone());
    let max = eig.eigenvalues.max();
    if !(max > 0.0) {
        return Err(Error::Matrix("correlation has no positive eigenvalue".into()));
    }
    let floor = PD_CLIP * max;
    let clipped = eig.eigenvalues.map(|v| v.max(floor));
    let rebuilt = &eig.eigenvectors * DMatrix::from_diagonal(&clipped) * eig.eigenvectors.transpose();
    let d: Vec<f64> = (0..k).map(|i| rebuilt[(i, i)].sqrt()).collect();
    let out = DMatrix::from_fn(k, k, |i, j| if i == j { 1.0 } else { 0.5 * (rebuilt[(i, j)] + rebuilt[(j, i)]) / (d[i] * d[j]) });
    if out.clone().cholesky().is_none() {
        return Err(Error::Matrix("correlation could not be repaired".into()));
    }
    Ok(out)
}

/// Worst-case null point for the t = 0 member with margins `c`.
pub fn lambda_argsup(
    sigma1: &[f64],
    correlation: &DMatrix<f64>,
    c: &[f64],
    spec: &EquivalenceSpec,
    tol: f64,
    seed: u64,
) -> Result<LambdaResult> {
    let engine = MvnEngine::new(correlation, seed)?;
    if sigma1.len() != engine.dim() || c.len() != engine.dim() {
        return Err(Error::invalid("sigma1 and c must match the correlation dimension"));
    }
    Ok(lambda_with_engine(&engine, sigma1, c, spec.c0, tol))
}

fn lambda_with_engine(engine: &MvnEngine, sigma1: &[f64], c: &[f64], c0: f64, tol: f64) -> LambdaResult {
    search_faces(sigma1.len(), c0, |theta| rect_t0(engine, theta, sigma1, c, tol))
}

/// One row of the fixed-point trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub outer: usize,
    pub gamma: f64,
    pub lambda: Vec<f64>,
    pub residual: f64,
}

/// Result of the multivariate cTOST fixed point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MvtAdjustment {
    pub c_star: Vec<f64>,
    /// Shared marginal size.
    pub gamma: f64,
    pub lambda: LambdaResult,
    /// ω_K(λ, Σ̂₁, ν₂, 0, c*).
    pub global_size: f64,
    pub marginal_sizes: Vec<f64>,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
    pub converged: bool,
    pub trace: Vec<TraceEntry>,
}

#[derive(Debug, Clone, Copy)]
pub struct MvtOptions {
    /// Stop on |ω_K(λ, c) − α₀| ≤ tol.
    pub tol: f64,
    pub max_outer: usize,
    pub seed: u64,
    /// Wishart draws for t ≠ 0 evaluations (α-TOST).
    pub draws: usize,
}

impl Default for MvtOptions {
    fn default() -> Self {
        Self { tol: DEFAULT_TOL, max_outer: DEFAULT_MAX_OUTER, seed: 0, draws: DEFAULT_WISHART_DRAWS }
    }
}

impl MvtOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol >= MIN_TOL && self.tol < 1.0) {
            return Err(Error::domain(format!("tol must lie in [{MIN_TOL:e}, 1), got {:e}", self.tol)));
        }
        if self.max_outer == 0 || self.draws == 0 {
            return Err(Error::invalid("max_outer and draws must be positive"));
        }
        Ok(())
    }
}

fn margins_at(sigma1: &[f64], c0: f64, gamma: f64) -> Result<Vec<f64>> {
    sigma1.iter().map(|&s| matched_margin_t0(s, c0, gamma).map(|r| r.x)).collect()
}

/// Multivariate cTOST margins c* with equal marginal sizes γ and global
/// size α₀ at the worst-case λ.
///
/// Outer loop: λ ← argsup of ω_K at the current margins. Inner loop, λ
/// fixed: γ ← γ + α₀ − ω_K(λ, c(γ)) with c_k(γ) the univariate t = 0
/// margin at level γ, until |Δγ| ≤ 1e-8.
pub fn ctost_mvt_adjust(s: &MvtSummary, spec: &EquivalenceSpec, opts: &MvtOptions) -> Result<MvtAdjustment> {
    s.validate()?;
    spec.validate()?;
    opts.validate()?;
    let (c0, a0) = (spec.c0, spec.alpha0);
    let engine = MvnEngine::new(&s.correlation_hat, opts.seed)?;
    // Rectangle probabilities need to be finer than the outer tolerance.
    let mvn_tol = opts.tol / 10.0;
    let sig = &s.sigma1_hat;

    let mut gamma = a0;
    let mut c = vec![c0; s.dim()];
    let mut lambda = lambda_with_engine(&engine, sig, &c, c0, mvn_tol);
    let mut trace = Vec::new();
    let mut inner_total = 0;
    for outer in 1..=opts.max_outer {
        for _ in 0..MAX_INNER {
            c = margins_at(sig, c0, gamma)?;
            let size = rect_t0(&engine, &lambda.lambda, sig, &c, mvn_tol);
            let next = (gamma + a0 - size).clamp(a0, 0.999_999);
            inner_total += 1;
            let delta = next - gamma;
            gamma = next;
            if delta.abs() <= GAMMA_TOL {
                break;
            }
        }
        c = margins_at(sig, c0, gamma)?;
        lambda = lambda_with_engine(&engine, sig, &c, c0, mvn_tol);
        let residual = lambda.objective - a0;
        trace.push(TraceEntry { outer, gamma, lambda: lambda.lambda.clone(), residual });
        if residual.abs() <= opts.tol {
            let marginal_sizes = sig.iter().zip(&c).map(|(&s, &ck)| omega_t0(c0, s, ck)).collect();
            return Ok(MvtAdjustment {
                c_star: c,
                gamma,
                global_size: lambda.objective,
                lambda,
                marginal_sizes,
                outer_iterations: outer,
                inner_iterations: inner_total,
                converged: true,
                trace,
            });
        }
    }
    Err(Error::NonConvergence {
        solver: "ctost_mvt_adjust",
        iterations: opts.max_outer,
        last: gamma,
        residual: trace.last().map_or(f64::NAN, |t| t.residual),
        trace: trace
            .iter()
            .map(|t| format!("outer {}: gamma = {:.12}, lambda = {:?}, residual = {:.3e}", t.outer, t.gamma, t.lambda, t.residual))
            .collect(),
    })
}

/// Size sup_θ ω_K(θ, Σ̂₁, ν₂, t·1, c) of a member with shared t > 0, with the
/// worst-case point.
///
/// Under identity correlation ω_K factors into univariate terms that each
/// peak at θ_k = 0, so the supremum is at an axis point and is computed
/// exactly; otherwise the faces are searched with the Monte Carlo objective.
pub fn size_shared_t(eval: &WishartEvaluator, s: &MvtSummary, t: f64, c: &[f64], c0: f64, tol: f64) -> (f64, Vec<f64>) {
    let k = s.dim();
    let tv = vec![t; k];
    if is_identity(&s.correlation_hat) {
        let at0: Vec<f64> = (0..k).map(|i| omega(0.0, s.sigma1_hat[i], s.nu2, t, c[i])).collect();
        let mut best = (f64::NEG_INFINITY, 0);
        for h in 0..k {
            let v = omega(c0, s.sigma1_hat[h], s.nu2, t, c[h]) * (0..k).filter(|&i| i != h).map(|i| at0[i]).product::<f64>();
            if v > best.0 {
                best = (v, h);
            }
        }
        let mut lam = vec![0.0; k];
        lam[best.1] = c0;
        return (best.0, lam);
    }
    let r = search_faces(k, c0, |theta| eval.power(theta, &tv, c, tol));
    (r.objective, r.lambda)
}

/// Result of the multivariate α-TOST level search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MvtAlphaAdjustment {
    pub alpha_star: f64,
    pub t: f64,
    pub size: f64,
    pub lambda: Vec<f64>,
    pub saturated: bool,
    pub iterations: usize,
}

/// Shared level α* ∈ [α₀, 0.5] such that the member (t_{α*,ν₂}·1, c₀·1)
/// has size α₀.
pub fn alpha_tost_mvt_adjust(s: &MvtSummary, spec: &EquivalenceSpec, opts: &MvtOptions) -> Result<MvtAlphaAdjustment> {
    s.validate()?;
    spec.validate()?;
    opts.validate()?;
    let (c0, a0) = (spec.c0, spec.alpha0);
    let eval = WishartEvaluator::new(&s.sigma1_hat, &s.correlation_hat, s.nu2, opts.draws, opts.seed)?;
    let c = vec![c0; s.dim()];
    let t_of = |alpha: f64| if alpha >= 0.5 { 0.0 } else { t_quantile(alpha, s.nu2).expect("alpha in (0, 0.5)") };
    let size_at = |alpha: f64| size_shared_t(&eval, s, t_of(alpha), &c, c0, opts.tol / 10.0);
    let (top, lam_top) = size_at(0.5);
    if top < a0 {
        return Ok(MvtAlphaAdjustment { alpha_star: 0.5, t: 0.0, size: top, lambda: lam_top, saturated: true, iterations: 0 });
    }
    let (bottom, lam_bottom) = size_at(a0);
    if bottom >= a0 {
        return Ok(MvtAlphaAdjustment { alpha_star: a0, t: t_of(a0), size: bottom, lambda: lam_bottom, saturated: false, iterations: 0 });
    }
    let root = bisect_increasing(|a| size_at(a).0 - a0, a0, 0.5, 1e-10, 1e-12, 200, "alpha_tost_mvt")?;
    let (size, lambda) = size_at(root.x);
    Ok(MvtAlphaAdjustment { alpha_star: root.x, t: t_of(root.x), size, lambda, saturated: false, iterations: root.iterations })
}

/// Decision for K ≥ 1 under `method` ∈ {tost, alpha-tost, ctost}.
pub fn mvt_decide(s: &MvtSummary, spec: &EquivalenceSpec, method: Method, opts: &MvtOptions) -> Result<DecisionReport> {
    s.validate()?;
    spec.validate()?;
    let k = s.dim();
    let parts = |t: Vec<f64>, c: Vec<f64>| DecisionParts {
        method,
        spec,
        nu2: s.nu2,
        theta_hat: &s.theta_hat,
        sigma1_hat: &s.sigma1_hat,
        t,
        c,
    };
    match method {
        Method::Tost => {
            let t = t_quantile(spec.alpha0, s.nu2)?;
            Ok(parts(vec![t; k], vec![spec.c0; k]).into_report())
        }
        Method::AlphaTost => {
            let adj = alpha_tost_mvt_adjust(s, spec, opts)?;
            let mut r = parts(vec![adj.t; k], vec![spec.c0; k]).into_report();
            r.alpha_adjusted = Some(adj.alpha_star);
            r.saturated = adj.saturated;
            if adj.saturated {
                r.warnings.push("alpha-TOST saturated at alpha = 0.5".into());
            }
            Ok(r)
        }
        Method::Ctost => {
            let adj = ctost_mvt_adjust(s, spec, opts)?;
            let mut r = parts(vec![0.0; k], adj.c_star).into_report();
            r.gamma = Some(adj.gamma);
            Ok(r)
        }
        other => Err(Error::invalid(format!("method {other} is not available for multivariate summaries"))),
    }
}
