//! Shared request and report types.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// ln 1.25, the conventional average-bioequivalence margin.
pub const DEFAULT_C0: f64 = 0.223_143_551_314_209_76;
pub const DEFAULT_ALPHA0: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Tost,
    AlphaTost,
    DeltaTost,
    Ctost,
    CtostStar,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::Tost, Method::AlphaTost, Method::DeltaTost, Method::Ctost, Method::CtostStar];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Tost => "tost",
            Method::AlphaTost => "alpha-tost",
            Method::DeltaTost => "delta-tost",
            Method::Ctost => "ctost",
            Method::CtostStar => "ctost-star",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown method '{s}'")))
    }
}

/// Equivalence margin, nominal level and procedure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceSpec {
    pub c0: f64,
    pub alpha0: f64,
    pub method: Method,
}

impl Default for EquivalenceSpec {
    fn default() -> Self {
        Self { c0: DEFAULT_C0, alpha0: DEFAULT_ALPHA0, method: Method::Ctost }
    }
}

impl EquivalenceSpec {
    pub fn new(c0: f64, alpha0: f64, method: Method) -> Result<Self> {
        let s = Self { c0, alpha0, method };
        s.validate()?;
        Ok(s)
    }

    pub fn with_method(self, method: Method) -> Self {
        Self { method, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c0 > 0.0 && self.c0.is_finite()) {
            return Err(Error::domain(format!("c0 must be positive, got {}", self.c0)));
        }
        if !(self.alpha0 > 0.0 && self.alpha0 <= 0.5) {
            return Err(Error::domain(format!("alpha0 must lie in (0, 0.5], got {}", self.alpha0)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
}

impl Interval {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    /// Strict containment in (−c₀, c₀).
    pub fn inside(&self, c0: f64) -> bool {
        self.lower > -c0 && self.upper < c0
    }
}

/// Outcome of an equivalence assessment.
///
/// Dimension k rejects H₀ iff |θ̂_k| < `margins[k]`, where the effective
/// margin is c_k − t_k σ̂_{1,k}. When every effective margin is below c₀ the
/// decision is equivalent to inclusion of θ̂_k ± (c₀ − margin_k) in
/// (−c₀, c₀), and those intervals are reported.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionReport {
    pub method: Method,
    pub dimension: usize,
    pub c0: f64,
    pub alpha0: f64,
    pub nu2: u32,
    pub theta_hat: Vec<f64>,
    pub sigma1_hat: Vec<f64>,
    /// Critical multipliers t_k.
    pub t: Vec<f64>,
    /// Margins c_k.
    pub c: Vec<f64>,
    /// Effective margins c_k − t_k σ̂_{1,k}.
    pub margins: Vec<f64>,
    pub iip_available: bool,
    pub intervals: Option<Vec<Interval>>,
    pub reject_per_dimension: Vec<bool>,
    pub equivalent: bool,
    pub verdict: String,
    pub alpha_adjusted: Option<f64>,
    pub alpha_c: Option<f64>,
    pub gamma: Option<f64>,
    pub saturated: bool,
    pub warnings: Vec<String>,
}

pub const VERDICT_EQUIVALENT: &str = "equivalent";
pub const VERDICT_NOT_EQUIVALENT: &str = "not equivalent";

/// Inputs needed to assemble a [`DecisionReport`].
pub(crate) struct DecisionParts<'a> {
    pub method: Method,
    pub spec: &'a EquivalenceSpec,
    pub nu2: u32,
    pub theta_hat: &'a [f64],
    pub sigma1_hat: &'a [f64],
    pub t: Vec<f64>,
    pub c: Vec<f64>,
}

impl DecisionParts<'_> {
    pub fn into_report(self) -> DecisionReport {
        let k = self.theta_hat.len();
        let margins: Vec<f64> = (0..k).map(|i| self.c[i] - self.t[i] * self.sigma1_hat[i]).collect();
        let reject: Vec<bool> = (0..k).map(|i| self.theta_hat[i].abs() < margins[i]).collect();
        let equivalent = reject.iter().all(|&r| r);
        let c0 = self.spec.c0;
        let iip = margins.iter().all(|&m| m < c0);
        let intervals = iip.then(|| {
            (0..k)
                .map(|i| {
                    let h = c0 - margins[i];
                    Interval { lower: self.theta_hat[i] - h, upper: self.theta_hat[i] + h }
                })
                .collect()
        });
        DecisionReport {
            method: self.method,
            dimension: k,
            c0,
            alpha0: self.spec.alpha0,
            nu2: self.nu2,
            theta_hat: self.theta_hat.to_vec(),
            sigma1_hat: self.sigma1_hat.to_vec(),
            t: self.t,
            c: self.c,
            margins,
            iip_available: iip,
            intervals,
            reject_per_dimension: reject,
            equivalent,
            verdict: if equivalent { VERDICT_EQUIVALENT } else { VERDICT_NOT_EQUIVALENT }.to_string(),
            alpha_adjusted: None,
            alpha_c: None,
            gamma: None,
            saturated: false,
            warnings: Vec::new(),
        }
    }
}
