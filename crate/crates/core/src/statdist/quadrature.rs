//! Fixed quadrature rules on [−1, 1] and an adaptive composite integrator.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Node count of the default Gauss–Legendre rule.
pub const GL_NODES: usize = 64;
/// Successive composite estimates must agree to this before returning.
pub const ADAPTIVE_TOL: f64 = 1e-9;
const MAX_PANELS: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QuadratureKind {
    GaussLegendre,
    TanhSinh,
}

/// Nodes and weights on the reference interval [−1, 1]; weights sum to 2.
#[derive(Debug, Clone)]
pub struct QuadratureRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub kind: QuadratureKind,
}

impl QuadratureRule {
    /// n-point Gauss–Legendre rule (n ≥ 16).
    pub fn gauss_legendre(n: usize) -> Result<Self> {
        if n < 16 {
            return Err(Error::invalid(format!("quadrature needs at least 16 nodes, got {n}")));
        }
        let (nodes, weights) = legendre_nodes(n);
        Ok(Self { nodes, weights, kind: QuadratureKind::GaussLegendre })
    }

    /// Tanh-sinh rule with step h on [−3, 3] in the transformed variable.
    pub fn tanh_sinh(n: usize) -> Result<Self> {
        if n < 16 {
            return Err(Error::invalid(format!("quadrature needs at least 16 nodes, got {n}")));
        }
        let half = std::f64::consts::FRAC_PI_2;
        let tmax = 3.0;
        let h = 2.0 * tmax / (n - 1) as f64;
        let mut nodes = Vec::with_capacity(n);
        let mut weights = Vec::with_capacity(n);
        for i in 0..n {
            let t = -tmax + i as f64 * h;
            let u = half * t.sinh();
            let ch = u.cosh();
            nodes.push(u.tanh());
            weights.push(h * half * t.cosh() / (ch * ch));
        }
        // Rescale so the rule integrates constants exactly.
        let s: f64 = weights.iter().sum();
        for w in &mut weights {
            *w *= 2.0 / s;
        }
        Ok(Self { nodes, weights, kind: QuadratureKind::TanhSinh })
    }

    /// ∫_a^b f under the affine map from [−1, 1].
    pub fn integrate<F: FnMut(f64) -> f64>(&self, mut f: F, a: f64, b: f64) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(mid + half * x))
            .sum::<f64>()
            * half
    }
}

/// Shared 64-node Gauss–Legendre rule.
pub fn gl64() -> &'static QuadratureRule {
    static RULE: OnceLock<QuadratureRule> = OnceLock::new();
    RULE.get_or_init(|| QuadratureRule::gauss_legendre(GL_NODES).expect("64 >= 16"))
}

/// Composite 64-node Gauss–Legendre on [a, b], doubling the panel count
/// until two successive estimates differ by less than `tol`.
pub fn integrate_adaptive<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, tol: f64) -> f64 {
    if !(b > a) {
        return 0.0;
    }
    let rule = gl64();
    let mut prev = rule.integrate(&mut f, a, b);
    let mut panels = 2;
    while panels <= MAX_PANELS {
        let h = (b - a) / panels as f64;
        let cur: f64 = (0..panels)
            .map(|i| {
                let lo = a + i as f64 * h;
                rule.integrate(&mut f, lo, lo + h)
            })
            .sum();
        if (cur - prev).abs() < tol {
            return cur;
        }
        prev = cur;
        panels *= 2;
    }
    prev
}

// Newton on P_n from the Chebyshev-like initial guesses; symmetric fill.
pub(crate) fn legendre_nodes(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    let nf = n as f64;
    for i in 0..m {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, 0.0);
            for j in 0..n {
                let p2 = p1;
                p1 = p0;
                let jf = j as f64;
                p0 = ((2.0 * jf + 1.0) * z * p1 - jf * p2) / (jf + 1.0);
            }
            dp = nf * (z * p0 - p1) / (z * z - 1.0);
            let dz = p0 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}
